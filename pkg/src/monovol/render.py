"""Silhouette rendering of a posed mesh through P = K [R | t]."""

from __future__ import annotations

import logging

import numpy as np
from PIL import Image
from scipy import ndimage

from . import _core
from .errors import EmptyRenderError, InputError
from .geometry import CameraIntrinsics, RigidTransform
from .mesh import TriangleMesh
from .objectpose import Silhouette

logger = logging.getLogger(__name__)


def projection_matrix(K: CameraIntrinsics, extrinsics: RigidTransform) -> np.ndarray:
    """3x4 camera matrix for world->camera ``extrinsics``."""
    return K.matrix @ extrinsics.matrix


def project_homogeneous(P: np.ndarray, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return np.column_stack([pts, np.ones(len(pts))]) @ np.asarray(P, dtype=float).T


def rasterize_window(mesh: TriangleMesh, P, width: int, height: int, backend: str | None = None):
    """Rasterize only the image window covered by the projected mesh.

    Returns ``(bits, x0, y0, n_discarded)`` where ``bits`` covers pixel columns
    ``x0 ..`` and rows ``y0 ..`` of the full ``width x height`` image.
    Triangles with any vertex at non-positive depth are discarded.
    """
    if width <= 0 or height <= 0:
        raise InputError(f"render size must be positive, got {width}x{height}")
    hom = project_homogeneous(P, mesh.vertices)
    w = hom[:, 2]
    front = w > 0
    keep = np.all(front[mesh.triangles], axis=1)
    n_discarded = int(len(keep) - keep.sum())
    if not keep.any():
        raise EmptyRenderError(
            f"all {len(keep)} triangles are at or behind the camera; nothing to render"
        )
    tris = mesh.triangles[keep]
    xy = np.zeros((len(hom), 2))
    xy[front] = hom[front, :2] / w[front, None]
    used = xy[tris.ravel()]
    x0 = max(0, int(np.ceil(used[:, 0].min())))
    y0 = max(0, int(np.ceil(used[:, 1].min())))
    x1 = min(width - 1, int(np.floor(used[:, 0].max())))
    y1 = min(height - 1, int(np.floor(used[:, 1].max())))
    if x0 > x1 or y0 > y1:
        return np.zeros((0, 0), dtype=np.uint8), 0, 0, n_discarded
    local = xy - np.array([x0, y0], dtype=float)
    bits = _core.rasterize(local, tris, x1 - x0 + 1, y1 - y0 + 1, backend=backend)
    return bits, x0, y0, n_discarded


def rasterize_mesh(mesh: TriangleMesh, P, width: int, height: int, backend: str | None = None):
    """Return (full-size uint8 mask, number of discarded triangles)."""
    win, x0, y0, n_discarded = rasterize_window(mesh, P, width, height, backend)
    bits = np.zeros((height, width), dtype=np.uint8)
    bits[y0 : y0 + win.shape[0], x0 : x0 + win.shape[1]] = win
    return bits, n_discarded


def render_silhouette(mesh: TriangleMesh, P, width: int, height: int, backend: str | None = None) -> Silhouette:
    """Binary silhouette of ``mesh`` at the given resolution, no depth test."""
    bits, n_discarded = rasterize_mesh(mesh, P, width, height, backend)
    if n_discarded:
        logger.debug("discarded %d triangles at non-positive depth", n_discarded)
    sil = Silhouette(bits)
    if sil.area == 0:
        logger.warning("rendered silhouette is empty: mesh projects outside the %dx%d image", width, height)
    return sil


def save_overlay(image_path, mask: Silhouette, out_path, color=(255, 0, 0)) -> None:
    """Draw the boundary of ``mask`` over the RGB image at ``image_path``."""
    with Image.open(image_path) as im:
        rgb = np.array(im.convert("RGB"))
    if rgb.shape[:2] != mask.bits.shape:
        raise InputError(
            f"image {image_path} is {rgb.shape[1]}x{rgb.shape[0]}, mask is {mask.width}x{mask.height}"
        )
    edge = mask.bits & ~ndimage.binary_erosion(mask.bits)
    rgb[edge] = color
    Image.fromarray(rgb).save(out_path)
