"""Pure-numpy twin of the compiled rasterizer; same sampling and fill rule."""

from __future__ import annotations

import math

import numpy as np


def _inside(e, dx, dy):
    top_left = dy < 0.0 or (dy == 0.0 and dx > 0.0)
    return (e > 0.0) | ((e == 0.0) & top_left)


def rasterize(xy: np.ndarray, tris: np.ndarray, width: int, height: int) -> np.ndarray:
    out = np.zeros((height, width), dtype=np.uint8)
    for i0, i1, i2 in tris:
        ax, ay = xy[i0]
        bx, by = xy[i1]
        cx, cy = xy[i2]
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area == 0.0 or area != area:
            continue
        if area < 0.0:
            bx, by, cx, cy = cx, cy, bx, by
        x0 = max(0, math.ceil(min(ax, bx, cx)))
        x1 = min(width - 1, math.floor(max(ax, bx, cx)))
        y0 = max(0, math.ceil(min(ay, by, cy)))
        y1 = min(height - 1, math.floor(max(ay, by, cy)))
        if x0 > x1 or y0 > y1:
            continue
        px = np.arange(x0, x1 + 1, dtype=float)[None, :]
        py = np.arange(y0, y1 + 1, dtype=float)[:, None]
        inside = _inside((bx - ax) * (py - ay) - (by - ay) * (px - ax), bx - ax, by - ay)
        inside &= _inside((cx - bx) * (py - by) - (cy - by) * (px - bx), cx - bx, cy - by)
        inside &= _inside((ax - cx) * (py - cy) - (ay - cy) * (px - cx), ax - cx, ay - cy)
        out[y0 : y1 + 1, x0 : x1 + 1] |= inside.astype(np.uint8)
    return out
