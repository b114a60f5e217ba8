"""Pinhole projection, planar PnP, extrinsics inversion and homography fitting.

Conventions
-----------
World frame: right-handed, Z up, checkerboard on the Z = 0 plane, units cm.
Camera frame: x right, y down, z forward (along the optical axis).
Pixels: (u, v) measured at pixel centers, u rightward, v downward, origin
at the top-left pixel center.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BehindCameraError,
    DegenerateConfigurationError,
    InputError,
    InsufficientDataError,
    NoConvergenceError,
    RectificationError,
)

logger = logging.getLogger(__name__)

ROTATION_TOL = 1e-9

_DISTORTION_KEYS = ("k1", "k2", "k3", "k4", "k5", "k6", "p1", "p2", "s1", "s2", "s3", "s4")


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    skew: float = 0.0
    image_width: int | None = None
    image_height: int | None = None

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InputError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        for name in ("cx", "cy", "skew"):
            if not math.isfinite(getattr(self, name)):
                raise InputError(f"intrinsic {name} must be finite")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, self.skew, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def inverse_matrix(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)

    @classmethod
    def from_matrix(cls, K, image_width=None, image_height=None) -> "CameraIntrinsics":
        K = np.asarray(K, dtype=float)
        if K.shape != (3, 3) or abs(K[2, 2]) < 1e-15:
            raise InputError("intrinsic matrix must be 3x3 with nonzero bottom-right entry")
        K = K / K[2, 2]
        if abs(K[1, 0]) > 1e-12 or abs(K[2, 0]) > 1e-12 or abs(K[2, 1]) > 1e-12:
            raise InputError("intrinsic matrix must be upper triangular")
        return cls(K[0, 0], K[1, 1], K[0, 2], K[1, 2], K[0, 1], image_width, image_height)

    @classmethod
    def from_dict(cls, data: dict) -> "CameraIntrinsics":
        for key in _DISTORTION_KEYS:
            if float(data.get(key, 0.0) or 0.0) != 0.0:
                raise InputError(
                    f"lens distortion is not modelled; intrinsics field {key!r} must be 0"
                )
        dist = data.get("distortion") or data.get("dist_coeffs") or []
        if any(float(d) != 0.0 for d in dist):
            raise InputError("lens distortion is not modelled; distortion coefficients must be 0")
        try:
            return cls(
                fx=float(data["fx"]),
                fy=float(data["fy"]),
                cx=float(data["cx"]),
                cy=float(data["cy"]),
                skew=float(data.get("skew", 0.0)),
                image_width=int(data["image_width"]) if "image_width" in data else None,
                image_height=int(data["image_height"]) if "image_height" in data else None,
            )
        except KeyError as exc:
            raise InputError(f"intrinsics missing field {exc.args[0]!r}") from None

    def to_dict(self) -> dict:
        out = {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy, "skew": self.skew}
        if self.image_width is not None:
            out["image_width"] = self.image_width
            out["image_height"] = self.image_height
        return out


def load_intrinsics(path) -> CameraIntrinsics:
    """Read an intrinsics JSON file (fx, fy, cx, cy, skew, image_width, image_height)."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise InputError(f"intrinsics file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"intrinsics file {path} is not valid JSON: {exc}") from None
    return CameraIntrinsics.from_dict(data)


def _check_rotation(R: np.ndarray) -> None:
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise InputError("rotation must be a finite 3x3 matrix")
    if np.abs(R.T @ R - np.eye(3)).max() > ROTATION_TOL:
        raise InputError("rotation is not orthonormal")
    if abs(np.linalg.det(R) - 1.0) > ROTATION_TOL:
        raise InputError("rotation determinant is not +1")


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """x' = rotation @ x + translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float).reshape(-1)
        _check_rotation(R)
        if t.shape != (3,) or not np.all(np.isfinite(t)):
            raise InputError("translation must be a finite 3-vector")
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @property
    def matrix(self) -> np.ndarray:
        """The 3x4 matrix [R | t]."""
        return np.hstack([self.rotation, self.translation[:, None]])

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self ∘ other: apply ``other`` first."""
        return RigidTransform(
            self.rotation @ other.rotation, self.rotation @ other.translation + self.translation
        )

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}


@dataclass(frozen=True)
class Correspondence:
    pixel: tuple[float, float]
    world: tuple[float, float, float]


def checkerboard_world_grid(cols: int, rows: int, spacing: float) -> np.ndarray:
    """Inner-corner positions of a checkerboard on the Z = 0 plane.

    Points are row-major starting at the top-right corner of the board as seen
    in its canonical orientation. X grows leftward along a row and Y grows
    toward the rows nearer the camera, which keeps the frame right-handed with
    Z pointing up out of the board.

    Returns:
        (cols*rows, 3) array in cm.
    """
    if int(cols) != cols or int(rows) != rows or cols < 2 or rows < 2:
        raise InputError(f"grid needs at least 2x2 corners, got {cols}x{rows}")
    if not spacing > 0:
        raise InputError(f"grid spacing must be positive, got {spacing}")
    r, c = np.divmod(np.arange(int(cols) * int(rows)), int(cols))
    return np.column_stack([c * spacing, r * spacing, np.zeros(c.size)]).astype(float)


def project_points(K: CameraIntrinsics, extrinsics: RigidTransform, world_points) -> np.ndarray:
    """Vectorised pinhole projection; raises if any point has non-positive depth."""
    pts = np.atleast_2d(np.asarray(world_points, dtype=float))
    cam = extrinsics.apply(pts)
    z = cam[:, 2]
    if np.any(~(z > 0)):
        raise BehindCameraError("point at or behind the camera plane cannot be projected")
    x = cam[:, 0] / z
    y = cam[:, 1] / z
    u = K.fx * x + K.skew * y + K.cx
    v = K.fy * y + K.cy
    return np.column_stack([u, v])


def project_point(K: CameraIntrinsics, extrinsics: RigidTransform, world_point) -> tuple[float, float]:
    u, v = project_points(K, extrinsics, [world_point])[0]
    return float(u), float(v)


def invert_extrinsics(extrinsics: RigidTransform) -> RigidTransform:
    """World->camera extrinsics to camera pose in world: R = Rcᵀ, t = -Rcᵀ tc.

    The returned translation is the camera center in world coordinates.
    """
    Rt = extrinsics.rotation.T
    return RigidTransform(Rt, -Rt @ extrinsics.translation)


# ---------------------------------------------------------------------------
# rotations


def skew_matrix(w) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def rodrigues(w) -> np.ndarray:
    """Rotation matrix for the axis-angle vector ``w``."""
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    W = skew_matrix(w)
    if theta < 1e-8:
        # second-order Taylor expansion; exact to float precision here
        return np.eye(3) + W + 0.5 * W @ W
    return np.eye(3) + math.sin(theta) / theta * W + (1.0 - math.cos(theta)) / theta**2 * W @ W


def nearest_rotation(M) -> np.ndarray:
    """Closest rotation matrix to ``M`` in Frobenius norm."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def rotation_angle(R) -> float:
    """Angle (radians) of the rotation ``R``.

    atan2 of the sine (from the skew part) and cosine (from the trace) stays
    accurate near 0 where acos of the trace alone loses half the digits.
    """
    R = np.asarray(R, dtype=float)
    s = 0.5 * math.sqrt((R[2, 1] - R[1, 2]) ** 2 + (R[0, 2] - R[2, 0]) ** 2 + (R[1, 0] - R[0, 1]) ** 2)
    c = (np.trace(R) - 1.0) / 2.0
    return float(math.atan2(s, c))


# ---------------------------------------------------------------------------
# homography


def _normalizing_transform(pts: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to the origin with mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    mean_dist = np.linalg.norm(pts - centroid, axis=1).mean()
    if mean_dist < 1e-300:
        raise DegenerateConfigurationError("all points coincide")
    s = math.sqrt(2.0) / mean_dist
    return np.array([[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]])


def _apply_h(H: np.ndarray, pts: np.ndarray) -> np.ndarray:
    hom = np.column_stack([pts, np.ones(len(pts))]) @ H.T
    w = hom[:, 2]
    if np.any(np.abs(w) < 1e-12):
        raise RectificationError("point maps to the plane at infinity")
    return hom[:, :2] / w[:, None]


@dataclass(frozen=True, eq=False)
class Homography:
    matrix: np.ndarray
    transfer_error: float = 0.0

    def __post_init__(self):
        H = np.array(self.matrix, dtype=float)
        if H.shape != (3, 3):
            raise InputError("homography must be 3x3")
        if abs(H[2, 2]) > 1e-12:
            H = H / H[2, 2]
        if abs(np.linalg.det(H)) <= 1e-12:
            raise DegenerateConfigurationError("homography is singular")
        H.flags.writeable = False
        object.__setattr__(self, "matrix", H)

    def apply(self, points) -> np.ndarray:
        return _apply_h(self.matrix, np.atleast_2d(np.asarray(points, dtype=float)))

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix), self.transfer_error)


def symmetric_transfer_errors(H, src, dst) -> np.ndarray:
    """Per-pair sqrt(d(dst, H src)^2 + d(src, H^-1 dst)^2)."""
    H = H.matrix if isinstance(H, Homography) else np.asarray(H, dtype=float)
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    fwd = np.linalg.norm(_apply_h(H, src) - dst, axis=1)
    bwd = np.linalg.norm(_apply_h(np.linalg.inv(H), dst) - src, axis=1)
    return np.hypot(fwd, bwd)


def fit_homography(src, dst) -> Homography:
    """Normalised DLT fit of ``dst ~ H src``.

    Both point sets are conditioned by a similarity transform before the
    linear solve, then the solution is de-normalised. The returned
    homography carries the largest symmetric transfer error over the input
    pairs as ``transfer_error``.
    """
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    if len(src) != len(dst):
        raise InputError(f"point count mismatch: {len(src)} vs {len(dst)}")
    if len(src) < 4:
        raise InsufficientDataError(f"homography needs at least 4 pairs, got {len(src)}")
    if not (np.all(np.isfinite(src)) and np.all(np.isfinite(dst))):
        raise InputError("non-finite point coordinates")

    Ts = _normalizing_transform(src)
    Td = _normalizing_transform(dst)
    ps = src @ Ts[:2, :2].T + Ts[:2, 2]
    pd = dst @ Td[:2, :2].T + Td[:2, 2]

    n = len(src)
    A = np.zeros((2 * n, 9))
    x, y = ps[:, 0], ps[:, 1]
    xp, yp = pd[:, 0], pd[:, 1]
    A[0::2, 0] = x
    A[0::2, 1] = y
    A[0::2, 2] = 1.0
    A[0::2, 6] = -xp * x
    A[0::2, 7] = -xp * y
    A[0::2, 8] = -xp
    A[1::2, 3] = x
    A[1::2, 4] = y
    A[1::2, 5] = 1.0
    A[1::2, 6] = -yp * x
    A[1::2, 7] = -yp * y
    A[1::2, 8] = -yp

    _, sv, Vt = np.linalg.svd(A, full_matrices=True)
    # the null space must be one-dimensional: the 8th singular value has to be
    # well separated from zero
    if sv[7] < 1e-10 * sv[0]:
        raise DegenerateConfigurationError("rank-deficient DLT system (collinear points?)")
    Hn = Vt[-1].reshape(3, 3)
    H = np.linalg.inv(Td) @ Hn @ Ts
    if abs(H[2, 2]) > 1e-12:
        H = H / H[2, 2]
    else:
        H = H / np.linalg.norm(H)
    if abs(np.linalg.det(H)) <= 1e-12:
        raise DegenerateConfigurationError("fitted homography is singular")
    err = float(symmetric_transfer_errors(H, src, dst).max())
    return Homography(H, err)


# ---------------------------------------------------------------------------
# PnP


@dataclass(frozen=True)
class PnPSolution:
    extrinsics: RigidTransform
    mean_error: float  # px, mean Euclidean reprojection error
    rms_error: float
    iterations: int


def reprojection_errors(K: CameraIntrinsics, extrinsics: RigidTransform, world, pixels) -> np.ndarray:
    proj = project_points(K, extrinsics, world)
    return np.linalg.norm(proj - np.asarray(pixels, dtype=float), axis=1)


def _plane_frame(world: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal basis (columns e1, e2, n) and origin of the point plane.

    Raises for collinear point sets. The Z = 0 case returns the identity
    basis so board coordinates pass through untouched.
    """
    origin = world.mean(axis=0)
    centered = world - origin
    _, sv, Vt = np.linalg.svd(centered, full_matrices=True)
    if sv[0] <= 0 or sv[1] < 1e-9 * sv[0]:
        raise DegenerateConfigurationError("world points are collinear")
    if sv[2] > 1e-6 * sv[0]:
        raise DegenerateConfigurationError("world points are not coplanar")
    if np.allclose(world[:, 2], world[0, 2], atol=1e-12 * max(1.0, sv[0])):
        return np.eye(3), np.array([0.0, 0.0, world[0, 2]])
    B = Vt.T.copy()
    if np.linalg.det(B) < 0:
        B[:, 2] = -B[:, 2]
    return B, origin


def _initial_pose_from_homography(K: CameraIntrinsics, plane_xy: np.ndarray, pixels: np.ndarray):
    """Plane-to-camera pose from the plane->normalised-image homography."""
    Kinv = K.inverse_matrix
    norm = np.column_stack([pixels, np.ones(len(pixels))]) @ Kinv.T
    norm = norm[:, :2] / norm[:, 2:3]
    H = fit_homography(plane_xy, norm).matrix
    h1, h2, h3 = H[:, 0], H[:, 1], H[:, 2]
    lam = 2.0 / (np.linalg.norm(h1) + np.linalg.norm(h2))
    # points must lie in front of the camera: the plane origin maps to depth lam*h3[2]
    if h3[2] * lam < 0:
        lam = -lam
    r1, r2, t = lam * h1, lam * h2, lam * h3
    R = nearest_rotation(np.column_stack([r1, r2, np.cross(r1, r2)]))
    return R, t


def solve_pnp(correspondences, K: CameraIntrinsics, *, max_iterations: int = 100) -> PnPSolution:
    """Estimate world->camera extrinsics from coplanar 3D-2D correspondences.

    Homography-based initialisation followed by Levenberg-Marquardt
    minimisation of the squared pixel reprojection error. Rotation updates
    are axis-angle increments left-composed onto the current estimate.

    Args:
        correspondences: sequence of :class:`Correspondence`, or a pair
            ``(world (N,3), pixels (N,2))`` of arrays.
        K: camera intrinsics.

    Raises:
        InsufficientDataError: fewer than 4 correspondences.
        DegenerateConfigurationError: collinear world or pixel points.
        NoConvergenceError: the cost rose on 10 consecutive damped steps.
    """
    world, pixels = _unpack_correspondences(correspondences)
    n = len(world)
    if n < 4:
        raise InsufficientDataError(f"PnP needs at least 4 correspondences, got {n}")
    if not (np.all(np.isfinite(world)) and np.all(np.isfinite(pixels))):
        raise InputError("non-finite correspondence coordinates")

    B, origin = _plane_frame(world)
    psv = np.linalg.svd(pixels - pixels.mean(axis=0), compute_uv=False)
    if psv[0] <= 0 or psv[1] < 1e-9 * psv[0]:
        raise DegenerateConfigurationError("pixel points are collinear")

    plane = (world - origin) @ B
    R_p, t_p = _initial_pose_from_homography(K, plane[:, :2], pixels)
    # plane coordinates -> world: X = B p + origin, so cam = R_p B^T (X - origin) + t_p
    R = nearest_rotation(R_p @ B.T)
    t = t_p - R @ origin

    R, t, iters = _refine_lm(K, world, pixels, R, t, max_iterations)
    ext = RigidTransform(R, t)
    errs = reprojection_errors(K, ext, world, pixels)
    return PnPSolution(ext, float(errs.mean()), float(np.sqrt(np.mean(errs**2))), iters)


def _unpack_correspondences(correspondences) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(correspondences, tuple) and len(correspondences) == 2 and not isinstance(
        correspondences[0], Correspondence
    ):
        world = np.asarray(correspondences[0], dtype=float).reshape(-1, 3)
        pixels = np.asarray(correspondences[1], dtype=float).reshape(-1, 2)
    else:
        correspondences = list(correspondences)
        world = np.array([c.world for c in correspondences], dtype=float).reshape(-1, 3)
        pixels = np.array([c.pixel for c in correspondences], dtype=float).reshape(-1, 2)
    if len(world) != len(pixels):
        raise InputError("world/pixel count mismatch")
    return world, pixels


def _residuals_and_jacobian(K: CameraIntrinsics, world, pixels, R, t, with_jac=True):
    cam = world @ R.T + t
    x, y, z = cam[:, 0], cam[:, 1], cam[:, 2]
    if np.any(z <= 0):
        return None, None
    inv_z = 1.0 / z
    u = K.fx * x * inv_z + K.skew * y * inv_z + K.cx
    v = K.fy * y * inv_z + K.cy
    r = np.empty(2 * len(world))
    r[0::2] = u - pixels[:, 0]
    r[1::2] = v - pixels[:, 1]
    if not with_jac:
        return r, None
    n = len(world)
    # d(u,v)/d(cam)
    du = np.column_stack([K.fx * inv_z, K.skew * inv_z, -(K.fx * x + K.skew * y) * inv_z**2])
    dv = np.column_stack([np.zeros(n), K.fy * inv_z, -K.fy * y * inv_z**2])
    # d(cam)/d(omega) for R <- exp(omega) R is -[R X]_x
    RX = cam - t
    J = np.empty((2 * n, 6))
    for rows, d in ((slice(0, None, 2), du), (slice(1, None, 2), dv)):
        # row d^T (-[a]_x) equals (a x d)^T
        J[rows, :3] = np.cross(RX, d)
        J[rows, 3:] = d
    return r, J


def _refine_lm(K, world, pixels, R, t, max_iterations):
    r, J = _residuals_and_jacobian(K, world, pixels, R, t)
    if r is None:
        raise DegenerateConfigurationError("initial pose places points behind the camera")
    cost = float(r @ r)
    best = (R, t, cost)
    damping = 1e-3
    failures = 0
    it = 0
    for it in range(1, max_iterations + 1):
        JtJ = J.T @ J
        g = J.T @ r
        A = JtJ + damping * np.diag(np.diag(JtJ) + 1e-12)
        try:
            step = -np.linalg.solve(A, g)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(A, g, rcond=None)[0]
        if np.linalg.norm(step) < 1e-10:
            break
        R_new = rodrigues(step[:3]) @ R
        t_new = t + step[3:]
        r_new, _ = _residuals_and_jacobian(K, world, pixels, R_new, t_new, with_jac=False)
        new_cost = float(r_new @ r_new) if r_new is not None else math.inf
        if new_cost < cost:
            R, t, cost = nearest_rotation(R_new), t_new, new_cost
            r, J = _residuals_and_jacobian(K, world, pixels, R, t)
            damping *= 0.1
            failures = 0
            best = (R, t, cost)
        else:
            damping *= 10.0
            # a rejected step at a numerically flat minimum is convergence, not divergence
            if new_cost - cost <= 1e-12 * max(cost, 1e-30):
                failures = 0
                if damping > 1e12:
                    break
                continue
            failures += 1
            if failures >= 10:
                bR, bt, bc = best
                raise NoConvergenceError(
                    "PnP refinement diverged",
                    best=RigidTransform(bR, bt),
                    residual=math.sqrt(bc / len(world)),
                )
    return best[0], best[1], it


@dataclass(frozen=True)
class BoardSpec:
    """Inner-corner grid of the checkerboard (4x3 corners, 1.2 cm by default)."""

    cols: int = 4
    rows: int = 3
    spacing: float = 1.2

    def __post_init__(self):
        checkerboard_world_grid(self.cols, self.rows, self.spacing)

    @property
    def n_corners(self) -> int:
        return self.cols * self.rows

    def world_points(self) -> np.ndarray:
        return checkerboard_world_grid(self.cols, self.rows, self.spacing)

    @property
    def reference_corner(self) -> tuple[float, float]:
        """Plane coordinates of the top-right corner, the translation origin."""
        return (0.0, 0.0)

    @property
    def center(self) -> np.ndarray:
        return self.world_points().mean(axis=0)

    def to_dict(self) -> dict:
        return {"cols": self.cols, "rows": self.rows, "spacing_cm": self.spacing}

    @classmethod
    def from_dict(cls, data: dict | None) -> "BoardSpec":
        data = data or {}
        return cls(
            int(data.get("cols", 4)),
            int(data.get("rows", 3)),
            float(data.get("spacing_cm", data.get("spacing", 1.2))),
        )


def look_at(position, target, roll: float = 0.0, up=(0.0, 0.0, 1.0)) -> RigidTransform:
    """World->camera extrinsics for a camera at ``position`` aimed at ``target``.

    ``roll`` (radians) rotates the camera about its optical axis.
    """
    C = np.asarray(position, dtype=float)
    fwd = np.asarray(target, dtype=float) - C
    if np.linalg.norm(fwd) < 1e-12:
        raise InputError("camera position coincides with its target")
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, np.asarray(up, dtype=float))
    if np.linalg.norm(right) < 1e-9:
        raise InputError("viewing direction is parallel to the up vector")
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    R = np.vstack([right, down, fwd])
    if roll:
        R = rodrigues(np.array([0.0, 0.0, roll])) @ R
    R = nearest_rotation(R)
    return RigidTransform(R, -R @ C)


def orbit_camera(target, distance: float, elevation: float, azimuth: float = 0.0, roll: float = 0.0) -> RigidTransform:
    """Camera on a sphere around ``target`` (angles in radians).

    Azimuth 0 places the camera on the +Y side of the target, i.e. in front
    of the board's near rows, so world +X runs leftward in the image.
    """
    direction = np.array(
        [
            -math.sin(azimuth) * math.cos(elevation),
            math.cos(azimuth) * math.cos(elevation),
            math.sin(elevation),
        ]
    )
    target = np.asarray(target, dtype=float)
    return look_at(target + distance * direction, target, roll)
