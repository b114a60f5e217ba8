# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Edge-function triangle fill, pixel-center sampling, top-left rule."""

import numpy as np
cimport numpy as cnp
from libc.math cimport ceil, floor

cnp.import_array()


cdef inline bint _top_left(double dx, double dy) nogil:
    return dy < 0.0 or (dy == 0.0 and dx > 0.0)


def rasterize(const double[:, ::1] xy, const long long[:, ::1] tris, int width, int height):
    """Fill triangles (vertex pixel coordinates ``xy``) into a uint8 mask."""
    out_arr = np.zeros((height, width), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    cdef Py_ssize_t n = tris.shape[0], k
    cdef double ax, ay, bx, by, cx, cy, tx, ty, area
    cdef double e0dx, e0dy, e1dx, e1dy, e2dx, e2dy, w0, w1, w2, px, py
    cdef bint tl0, tl1, tl2
    cdef int x0, x1, y0, y1, x, y
    with nogil:
        for k in range(n):
            ax = xy[tris[k, 0], 0]; ay = xy[tris[k, 0], 1]
            bx = xy[tris[k, 1], 0]; by = xy[tris[k, 1], 1]
            cx = xy[tris[k, 2], 0]; cy = xy[tris[k, 2], 1]
            area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
            if area == 0.0 or area != area:
                continue
            if area < 0.0:
                tx = bx; ty = by
                bx = cx; by = cy
                cx = tx; cy = ty
            x0 = <int>ceil(min(ax, min(bx, cx)))
            x1 = <int>floor(max(ax, max(bx, cx)))
            y0 = <int>ceil(min(ay, min(by, cy)))
            y1 = <int>floor(max(ay, max(by, cy)))
            if x0 < 0: x0 = 0
            if y0 < 0: y0 = 0
            if x1 > width - 1: x1 = width - 1
            if y1 > height - 1: y1 = height - 1
            if x0 > x1 or y0 > y1:
                continue
            e0dx = bx - ax; e0dy = by - ay
            e1dx = cx - bx; e1dy = cy - by
            e2dx = ax - cx; e2dy = ay - cy
            tl0 = _top_left(e0dx, e0dy)
            tl1 = _top_left(e1dx, e1dy)
            tl2 = _top_left(e2dx, e2dy)
            for y in range(y0, y1 + 1):
                py = y
                for x in range(x0, x1 + 1):
                    if out[y, x]:
                        continue
                    px = x
                    w0 = e0dx * (py - ay) - e0dy * (px - ax)
                    if w0 < 0.0 or (w0 == 0.0 and not tl0):
                        continue
                    w1 = e1dx * (py - by) - e1dy * (px - bx)
                    if w1 < 0.0 or (w1 == 0.0 and not tl1):
                        continue
                    w2 = e2dx * (py - cy) - e2dy * (px - cx)
                    if w2 < 0.0 or (w2 == 0.0 and not tl2):
                        continue
                    out[y, x] = 1
    return out_arr
