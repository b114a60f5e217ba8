"""Hot kernels: compiled when the extension is built, numpy otherwise.

Set ``MONOVOL_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _raster_py

if os.environ.get("MONOVOL_PURE_PYTHON"):
    _compiled = None
else:
    try:
        from . import _raster as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def rasterize(xy, tris, width: int, height: int, backend: str | None = None) -> np.ndarray:
    """Fill triangles into a (height, width) uint8 mask.

    Pixel (row v, col u) is set iff its center (u, v) lies inside a triangle;
    edges are resolved by the top-left rule.
    """
    xy = np.ascontiguousarray(xy, dtype=np.float64)
    tris = np.ascontiguousarray(tris, dtype=np.int64)
    backend = backend or BACKEND
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled raster kernel is not built")
        return _compiled.rasterize(xy, tris, int(width), int(height))
    if backend == "python":
        return _raster_py.rasterize(xy, tris, int(width), int(height))
    raise ValueError(f"unknown backend {backend!r}")
