"""Object pose [tx, ty, theta_z] from a segmentation mask and the board rectifier."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DegenerateMaskError, EmptyMaskError, InputError, RectificationError
from .geometry import Homography

logger = logging.getLogger(__name__)

# covariance eigenvalue gap (relative to the trace) below which the mask is
# treated as isotropic and the angle is pinned to 0
ISOTROPY_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class Silhouette:
    """Binary raster mask, ``bits[row, col]`` with foreground True."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits).astype(bool, copy=True)
        if b.ndim != 2 or b.size == 0:
            raise InputError(f"mask must be a non-empty 2D array, got shape {b.shape}")
        b.flags.writeable = False
        object.__setattr__(self, "bits", b)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.bits))

    def foreground_pixels(self) -> np.ndarray:
        """(N, 2) array of (u, v) pixel-center coordinates of foreground pixels."""
        v, u = np.nonzero(self.bits)
        return np.column_stack([u, v]).astype(float)

    def __eq__(self, other):
        return isinstance(other, Silhouette) and np.array_equal(self.bits, other.bits)


def load_mask(path) -> Silhouette:
    """Read an 8-bit mask PNG; foreground is any value above 127."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "1", "P"):
                logger.warning("mask %s has mode %s; converting to 8-bit gray", path, im.mode)
            arr = np.asarray(im.convert("L"))
    except FileNotFoundError:
        raise InputError(f"mask file not found: {path}") from None
    except OSError as exc:
        raise InputError(f"cannot read mask {path}: {exc}") from None
    return Silhouette(arr > 127)


def save_mask(mask: Silhouette, path) -> None:
    Image.fromarray(mask.bits.astype(np.uint8) * 255).save(path)


def largest_component(mask: Silhouette) -> Silhouette:
    """Keep the largest 8-connected foreground component."""
    labels, n = ndimage.label(mask.bits, structure=np.ones((3, 3), dtype=bool))
    if n <= 1:
        return mask
    sizes = np.bincount(labels.ravel())[1:]
    keep = int(np.argmax(sizes)) + 1
    logger.warning(
        "mask has %d connected components; keeping the largest (%d of %d px)",
        n, sizes[keep - 1], int(sizes.sum()),
    )
    return Silhouette(labels == keep)


def wrap_half_turn(angle: float) -> float:
    """Map an undirected axis angle into [-pi/2, pi/2)."""
    a = math.fmod(angle + math.pi / 2, math.pi)
    if a < 0:
        a += math.pi
    a -= math.pi / 2
    if a >= math.pi / 2:  # fmod round-off
        a -= math.pi
    return a


def principal_axis_angle(mask: Silhouette) -> float:
    """Image-plane angle of the major principal axis of the foreground pixels.

    Measured from the +u axis toward +v (pixel coordinates, v downward) and
    returned in [-pi/2, pi/2). Near-isotropic masks return exactly 0.
    """
    pts = mask.foreground_pixels()
    if len(pts) == 0:
        raise EmptyMaskError("mask has no foreground pixels")
    if len(pts) < 2 or np.all(pts == pts[0]):
        raise DegenerateMaskError("orientation needs at least two distinct foreground pixels")
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / len(pts)
    evals, evecs = np.linalg.eigh(cov)
    trace = evals.sum()
    if evals[1] - evals[0] < ISOTROPY_TOL * trace:
        return 0.0
    major = evecs[:, 1]
    return wrap_half_turn(math.atan2(major[1], major[0]))


def mask_centroid(mask: Silhouette) -> np.ndarray:
    pts = mask.foreground_pixels()
    if len(pts) == 0:
        raise EmptyMaskError("mask has no foreground pixels")
    return pts.mean(axis=0)


def planar_translation(mask: Silhouette, rectifier: Homography, reference_corner=(0.0, 0.0)) -> tuple[float, float]:
    """Board-plane offset (cm) of the mask centroid from ``reference_corner``."""
    c = mask_centroid(mask)
    w = rectifier.matrix[2] @ np.array([c[0], c[1], 1.0])
    if abs(w) < 1e-12:
        raise RectificationError("mask centroid maps to the plane at infinity")
    xy = rectifier.apply(c)[0]
    return float(xy[0] - reference_corner[0]), float(xy[1] - reference_corner[1])


@dataclass(frozen=True)
class Ablation:
    """Object-pose components forced to zero."""

    zero_tx: bool = False
    zero_ty: bool = False
    zero_theta_z: bool = False

    _ALIASES = {
        "zero_tx": "zero_tx", "tx": "zero_tx",
        "zero_ty": "zero_ty", "ty": "zero_ty",
        "zero_theta": "zero_theta_z", "zero_theta_z": "zero_theta_z",
        "theta": "zero_theta_z", "theta_z": "zero_theta_z",
    }

    @classmethod
    def parse(cls, spec) -> "Ablation":
        """Build from ``"zero_tx,zero_ty"``, an iterable of names, or a dict."""
        if spec is None:
            return cls()
        if isinstance(spec, Ablation):
            return spec
        if isinstance(spec, dict):
            names = [k for k, v in spec.items() if v]
        elif isinstance(spec, str):
            names = [s.strip() for s in spec.split(",") if s.strip() and s.strip() != "none"]
        else:
            names = list(spec)
        flags = {}
        for name in names:
            try:
                flags[cls._ALIASES[name]] = True
            except KeyError:
                raise InputError(f"unknown ablation flag {name!r}") from None
        return cls(**flags)

    @property
    def names(self) -> list[str]:
        return [n for n in ("zero_tx", "zero_ty", "zero_theta_z") if getattr(self, n)]

    @property
    def tag(self) -> str:
        return "+".join(self.names) or "none"

    def __or__(self, other: "Ablation") -> "Ablation":
        return Ablation(
            self.zero_tx or other.zero_tx,
            self.zero_ty or other.zero_ty,
            self.zero_theta_z or other.zero_theta_z,
        )

    def to_dict(self) -> dict:
        return {"zero_tx": self.zero_tx, "zero_ty": self.zero_ty, "zero_theta_z": self.zero_theta_z}


# rows of the object-pose ablation table, un-ablated last
ABLATION_ROWS = (
    Ablation(zero_tx=True),
    Ablation(zero_ty=True),
    Ablation(zero_tx=True, zero_ty=True),
    Ablation(zero_theta_z=True),
    Ablation(),
)


@dataclass(frozen=True)
class ObjectPose:
    tx: float = 0.0
    ty: float = 0.0
    theta_z: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.tx, self.ty, self.theta_z)):
            raise InputError("object pose components must be finite")
        if not (-math.pi / 2 <= self.theta_z < math.pi / 2):
            raise InputError(f"theta_z {self.theta_z} outside [-pi/2, pi/2)")

    def ablate(self, ablation: Ablation) -> "ObjectPose":
        return ObjectPose(
            0.0 if ablation.zero_tx else self.tx,
            0.0 if ablation.zero_ty else self.ty,
            0.0 if ablation.zero_theta_z else self.theta_z,
        )

    def to_dict(self) -> dict:
        return {"tx": float(self.tx), "ty": float(self.ty), "theta_z": float(self.theta_z)}


def image_angle_to_theta_z(angle: float) -> float:
    # v points down in the image, so the world rotation about +Z has opposite sign
    return wrap_half_turn(-angle)


def estimate_object_pose(
    mask: Silhouette,
    rectifier: Homography,
    reference_corner=(0.0, 0.0),
    ablation: Ablation | None = None,
) -> ObjectPose:
    ablation = ablation or Ablation()
    if ablation.zero_tx and ablation.zero_ty:
        tx = ty = 0.0
        if mask.area == 0:
            raise EmptyMaskError("mask has no foreground pixels")
    else:
        tx, ty = planar_translation(mask, rectifier, reference_corner)
    theta = 0.0 if ablation.zero_theta_z else image_angle_to_theta_z(principal_axis_angle(mask))
    return ObjectPose(tx, ty, theta).ablate(ablation)
