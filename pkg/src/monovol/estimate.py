"""Per-scene volume and energy estimation.

The pipeline recovers the camera from the board corners, places the
reference mesh with the estimated object pose, renders its silhouette at the
input resolution and rescales the mesh by the square root of the area ratio.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import (
    EmptyMaskError,
    EmptyRenderError,
    InputError,
    MissingDensityError,
    MonovolError,
)
from .geometry import (
    BoardSpec,
    CameraIntrinsics,
    Homography,
    fit_homography,
    invert_extrinsics,
    solve_pnp,
)
from .mesh import MeshDatabase, TriangleMesh, apply_object_pose
from .objectpose import (
    Ablation,
    ObjectPose,
    Silhouette,
    estimate_object_pose,
    largest_component,
    load_mask,
    save_mask,
    wrap_half_turn,
)
from .render import projection_matrix, rasterize_mesh, rasterize_window, save_overlay

logger = logging.getLogger(__name__)


def mask_area(mask: Silhouette) -> int:
    return mask.area


def scale_factor(area_input: float, area_rendered: float) -> float:
    """Linear scale s = sqrt(A / A')."""
    if area_rendered <= 0:
        raise EmptyRenderError("rendered silhouette has zero area")
    if area_input <= 0:
        raise EmptyMaskError("input mask has zero area")
    return math.sqrt(area_input / area_rendered)


def estimate_volume(scale: float, model_volume: float) -> float:
    if not scale > 0 or not model_volume > 0:
        raise InputError(f"scale and model volume must be positive, got {scale}, {model_volume}")
    return scale**3 * model_volume


def estimate_energy(rho: float, volume: float) -> float:
    if not rho > 0:
        raise InputError(f"energy density must be positive, got {rho}")
    if volume < 0:
        raise InputError(f"volume must be non-negative, got {volume}")
    return rho * volume


class EnergyDensityTable(dict):
    """label -> kCal per mL."""

    def density(self, label: str) -> float:
        try:
            return self[label]
        except KeyError:
            raise MissingDensityError(f"no energy density for label {label!r}") from None

    @classmethod
    def load(cls, path) -> "EnergyDensityTable":
        """CSV with columns ``label, kcal_per_ml[, source]``."""
        path = Path(path)
        table = cls()
        try:
            with path.open(newline="") as fh:
                for i, row in enumerate(csv.DictReader(fh), 2):
                    try:
                        label = row["label"].strip()
                        rho = float(row["kcal_per_ml"])
                    except (KeyError, TypeError, ValueError):
                        raise InputError(f"{path}:{i}: expected columns label,kcal_per_ml") from None
                    if not rho > 0:
                        raise InputError(f"{path}:{i}: density for {label!r} must be positive")
                    table[label] = rho
        except FileNotFoundError:
            raise InputError(f"density table not found: {path}") from None
        return table

    def write(self, path, sources: dict[str, str] | None = None) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["label", "kcal_per_ml", "source"])
            for label in sorted(self):
                w.writerow([label, repr(self[label]), (sources or {}).get(label, "")])


@dataclass(frozen=True)
class RunConfig:
    """Pipeline options.

    ``refine_iterations`` = 0 renders the unit-scale model at the rectified
    mask centroid and uses s = sqrt(A / A') directly. Otherwise up to that
    many iterations fit yaw (silhouette second moments), then position and
    scale jointly, so that the rendered model's rectified centroid and area
    match the input's. The mask centroid sits above the board, so its
    rectified position alone is biased away from the camera. The record
    reports ``scale = reference_scale * sqrt(A / A')`` with A' the area of the
    model rendered at ``reference_scale``.
    """

    ablation: Ablation = field(default_factory=Ablation)
    refine_iterations: int = 10
    refine_orientation: bool = True
    keep_largest_component: bool = True
    debug_render: bool = False
    overlay: bool = False
    output_dir: str | None = None
    board: BoardSpec = field(default_factory=BoardSpec)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        abl = data.pop("ablation", None)
        flags = {k: data.pop(k) for k in ("zero_tx", "zero_ty", "zero_theta_z", "zero_theta") if k in data}
        ablation = Ablation.parse(abl) | Ablation.parse(flags)
        board = BoardSpec.from_dict(data.pop("board", None))
        known = {"refine_iterations", "refine_orientation", "keep_largest_component", "debug_render", "overlay", "output_dir"}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown run-config keys: {sorted(unknown)}")
        cfg = cls(ablation=ablation, board=board, **data)
        if cfg.refine_iterations < 0:
            raise InputError("refine_iterations must be >= 0")
        return cfg

    def to_dict(self) -> dict:
        return {
            "ablation": self.ablation.to_dict(),
            "refine_iterations": self.refine_iterations,
            "refine_orientation": self.refine_orientation,
            "keep_largest_component": self.keep_largest_component,
            "debug_render": self.debug_render,
            "overlay": self.overlay,
            "output_dir": self.output_dir,
            "board": self.board.to_dict(),
        }


def load_config(path) -> RunConfig:
    """Read a run config from TOML or JSON."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise InputError(f"config file not found: {path}") from None
    try:
        if path.suffix.lower() == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib
            data = tomllib.loads(raw.decode())
        else:
            data = json.loads(raw)
    except ValueError as exc:
        raise InputError(f"cannot parse config {path}: {exc}") from None
    return RunConfig.from_dict(data)


@dataclass(frozen=True)
class Scene:
    """Inputs for one image. ``mask`` may be a path or a loaded silhouette."""

    scene_id: str
    label: str
    mask: Any
    corners: np.ndarray
    image: str | None = None


@dataclass
class EstimateRecord:
    scene_id: str
    label: str
    ablation: Ablation
    status: str = "ok"
    area_input: int | None = None
    area_rendered: int | None = None
    reference_scale: float = 1.0
    scale: float | None = None
    model_volume_ml: float | None = None
    volume_ml: float | None = None
    density_kcal_per_ml: float | None = None
    energy_kcal: float | None = None
    pnp_residual_px: float | None = None
    homography_transfer_error: float | None = None
    camera_position: list[float] | None = None
    object_pose: ObjectPose | None = None
    discarded_triangles: int | None = None
    refine_iterations: int = 0
    error_stage: str | None = None
    error_type: str | None = None
    error_message: str | None = None
    exit_code: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "label": self.label,
            "status": self.status,
            "area_input": self.area_input,
            "area_rendered": self.area_rendered,
            "reference_scale": self.reference_scale,
            "scale": self.scale,
            "model_volume_ml": self.model_volume_ml,
            "volume_ml": self.volume_ml,
            "density_kcal_per_ml": self.density_kcal_per_ml,
            "energy_kcal": self.energy_kcal,
            "pnp_residual_px": self.pnp_residual_px,
            "homography_transfer_error": self.homography_transfer_error,
            "camera_position": self.camera_position,
            "object_pose": self.object_pose.to_dict() if self.object_pose else None,
            "discarded_triangles": self.discarded_triangles,
            "refine_iterations": self.refine_iterations,
            "ablation": self.ablation.to_dict(),
            "error": None if self.ok else {
                "stage": self.error_stage,
                "type": self.error_type,
                "message": self.error_message,
                "exit_code": self.exit_code,
            },
        }


class _Stage:
    """Context manager tagging any exception with the pipeline stage name."""

    def __init__(self, record: EstimateRecord, name: str):
        self.record = record
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None or not isinstance(exc, (MonovolError, np.linalg.LinAlgError)):
            return False
        exc.stage = self.name
        return False


@dataclass(frozen=True)
class _Shot:
    """Area, centroid and trace-normalized second moments of one render."""

    area: int
    centroid: np.ndarray
    shape: np.ndarray
    discarded: int


def _moments(bits: np.ndarray, x0: int = 0, y0: int = 0):
    # from row and column projections; integer sums stay exact in float64
    b = bits.astype(np.float64, copy=False)
    cols, rows = b.sum(axis=0), b.sum(axis=1)
    n = cols.sum()
    if n == 0:
        return 0, None, None
    u = np.arange(b.shape[1], dtype=np.float64)
    v = np.arange(b.shape[0], dtype=np.float64)
    uc, vc = cols @ u / n, rows @ v / n
    cxx = cols @ (u * u) / n - uc * uc
    cyy = rows @ (v * v) / n - vc * vc
    cxy = v @ (b @ u) / n - uc * vc
    tr = cxx + cyy
    shape = np.array([cxx, cxy, cyy]) / tr if tr > 0 else np.zeros(3)
    return int(n), np.array([uc + x0, vc + y0]), shape


def _shoot(mesh: TriangleMesh, pose: ObjectPose, scale: float, P, width: int, height: int) -> _Shot:
    bits, x0, y0, discarded = rasterize_window(apply_object_pose(mesh, pose, scale), P, width, height)
    area, centroid, shape = _moments(bits, x0, y0)
    if area == 0:
        raise EmptyRenderError("model renders outside the image")
    return _Shot(area, centroid, shape, discarded)


def _match_orientation(mesh, pose, scale, P, width, height, target_shape, coarse):
    """Yaw whose rendered silhouette best matches the input's normalized moments.

    Returns ``(theta, observable)``; ``observable`` is False when the moments
    do not change with yaw.

    The coarse pass scans the half turn in 5 degree steps; both passes finish
    with a bounded scalar search around the best candidate.
    """

    def cost(theta):
        trial = ObjectPose(pose.tx, pose.ty, wrap_half_turn(theta))
        try:
            shot = _shoot(mesh, trial, scale, P, width, height)
        except EmptyRenderError:
            return math.inf
        d = shot.shape - target_shape
        return float(d @ d)

    if coarse:
        grid = pose.theta_z + np.deg2rad(np.arange(-90.0, 90.0, 5.0))
        costs = np.array([cost(t) for t in grid])
        best = costs.min()
        if not math.isfinite(best) or costs.max() - best <= 1e-10:
            # rotationally symmetric silhouette: yaw is unobservable
            return pose.theta_z, False
        center, half = float(grid[int(np.argmin(costs))]), math.radians(5.0)
    else:
        center, half = pose.theta_z, math.radians(2.0)
    res = minimize_scalar(
        cost, bounds=(center - half, center + half), method="bounded", options={"xatol": 1e-4}
    )
    theta = res.x if res.fun <= cost(center) else center
    return wrap_half_turn(float(theta)), True


# relative scale step and position step (in model sizes) that end refinement
REFINE_TOL = 1e-4
# finite-difference step: relative for scale, in model sizes for position
FD_STEP = 1e-2
# yaw change (rad) below which the orientation search stops
YAW_SETTLED = 1e-3


def _place(pose: ObjectPose, free, values, theta) -> ObjectPose:
    xy = [pose.tx, pose.ty]
    for k, v in zip(free, values):
        xy[k] = float(v)
    return ObjectPose(xy[0], xy[1], wrap_half_turn(theta))


MAX_HALVINGS = 6


def _newton_step(residual, x, r, theta, steps):
    """Newton step from a forward-difference Jacobian, or the plain fixed-point
    step (centroid shift, sqrt-area rescale) when the Jacobian is unusable."""
    J = np.empty((len(x), len(x)))
    for j, h in enumerate(steps):
        xh = x.copy()
        xh[j] += h
        rh, _ = residual(xh, theta)
        if rh is None:
            return r.copy()
        J[:, j] = (rh - r) / h
    try:
        return -np.linalg.solve(J, r)
    except np.linalg.LinAlgError:
        return r.copy()


def refine_placement(mesh, pose: ObjectPose, mask: Silhouette, rectifier: Homography, P,
                     iterations: int, ablation: Ablation, orientation: bool = True):
    """Fit position, yaw and scale so the rendered model reproduces the mask.

    Returns ``(pose, reference_scale, shot, used)`` where ``shot`` describes
    the model rendered at ``reference_scale`` in the final pose and ``used`` is
    the number of iterations run before convergence or the cap.
    """
    width, height = mask.width, mask.height
    area_in, centroid_in, shape_in = _moments(mask.bits)
    target = rectifier.apply(centroid_in)[0]
    free = [k for k, off in ((0, ablation.zero_tx), (1, ablation.zero_ty)) if not off]
    turn = orientation and not ablation.zero_theta_z
    reference_scale = 1.0
    shot = _shoot(mesh, pose, reference_scale, P, width, height)

    def residual(x, theta):
        # x = (free position coordinates..., log scale); None if nothing renders
        trial = _place(pose, free, x[:-1], theta)
        try:
            sh = _shoot(mesh, trial, math.exp(x[-1]), P, width, height)
        except EmptyRenderError:
            return None, None
        d = target - rectifier.apply(sh.centroid)[0]
        return np.append(d[free], 0.5 * math.log(area_in / sh.area)), sh

    used = 0
    for it in range(iterations):
        used = it + 1
        s = reference_scale * math.sqrt(area_in / shot.area)
        theta = pose.theta_z
        if turn:
            theta, turn = _match_orientation(mesh, pose, s, P, width, height, shape_in, coarse=(it == 0))
            # once yaw has settled, position and scale finish the job alone
            if it and abs(wrap_half_turn(theta - pose.theta_z)) < YAW_SETTLED:
                turn = False
        x = np.array([(pose.tx, pose.ty)[k] for k in free] + [math.log(s)])
        # residuals in model sizes and log scale, so one norm covers both
        units = np.array([s] * len(free) + [1.0])
        r, sh = residual(x, theta)
        if r is None:
            raise EmptyRenderError("model renders outside the image")
        dx = _newton_step(residual, x, r, theta, units * FD_STEP)
        dx *= min(1.0, 1.0 / max(np.max(np.abs(dx) / units), 1e-300))
        for _ in range(MAX_HALVINGS):
            r_new, sh_new = residual(x + dx, theta)
            if r_new is not None and np.linalg.norm(r_new / units) < np.linalg.norm(r / units):
                x, sh = x + dx, sh_new
                break
            dx = dx / 2
        prev_pose, prev_scale = pose, reference_scale
        pose = _place(pose, free, x[:-1], theta)
        reference_scale, shot = math.exp(x[-1]), sh
        if (abs(reference_scale / prev_scale - 1.0) < REFINE_TOL
                and math.hypot(pose.tx - prev_pose.tx, pose.ty - prev_pose.ty) < REFINE_TOL * reference_scale
                and abs(wrap_half_turn(pose.theta_z - prev_pose.theta_z)) < REFINE_TOL):
            break
    return pose, reference_scale, shot, used


def run_pipeline(
    scene: Scene,
    mesh_db: MeshDatabase,
    K: CameraIntrinsics,
    densities: EnergyDensityTable,
    config: RunConfig | None = None,
) -> EstimateRecord:
    """Estimate volume and energy for one scene.

    Errors never escape: the record comes back with ``status="error"``, the
    failing stage, and whatever diagnostics were computed before the failure.
    """
    config = config or RunConfig()
    record = EstimateRecord(scene.scene_id, scene.label, config.ablation)
    try:
        _run(scene, mesh_db, K, densities, config, record)
    except (MonovolError, np.linalg.LinAlgError) as exc:
        record.status = "error"
        record.error_stage = getattr(exc, "stage", "unknown")
        record.error_type = type(exc).__name__
        record.error_message = str(exc)
        record.exit_code = getattr(exc, "exit_code", 3)
        logger.info("scene %s failed at %s: %s", scene.scene_id, record.error_stage, exc)
    return record


def _run(scene, mesh_db, K, densities, config: RunConfig, record: EstimateRecord) -> None:
    board = config.board
    with _Stage(record, "load-mask"):
        mask = scene.mask if isinstance(scene.mask, Silhouette) else load_mask(scene.mask)
        if config.keep_largest_component:
            mask = largest_component(mask)
        record.area_input = mask_area(mask)
        if record.area_input == 0:
            raise EmptyMaskError(f"mask for scene {scene.scene_id} is empty")
        width, height = mask.width, mask.height
        if K.image_width is not None and (K.image_width, K.image_height) != (width, height):
            raise InputError(
                f"mask is {width}x{height} but intrinsics are for "
                f"{K.image_width}x{K.image_height}"
            )

    with _Stage(record, "lookup"):
        mesh, model_volume = mesh_db.get(scene.label)
        record.model_volume_ml = model_volume
        rho = densities.density(scene.label)
        record.density_kcal_per_ml = rho

    with _Stage(record, "pnp"):
        corners = np.asarray(scene.corners, dtype=float).reshape(-1, 2)
        if len(corners) != board.n_corners:
            raise InputError(f"expected {board.n_corners} corners, got {len(corners)}")
        world = board.world_points()
        pnp = solve_pnp((world, corners), K)
        record.pnp_residual_px = pnp.mean_error
        record.camera_position = invert_extrinsics(pnp.extrinsics).translation.tolist()
        P = projection_matrix(K, pnp.extrinsics)

    with _Stage(record, "homography"):
        rectifier = fit_homography(corners, world[:, :2])
        record.homography_transfer_error = rectifier.transfer_error

    with _Stage(record, "object-pose"):
        pose = estimate_object_pose(mask, rectifier, board.reference_corner, config.ablation)
        record.object_pose = pose

    with _Stage(record, "render"):
        pose, reference_scale, shot, used = refine_placement(
            mesh, pose, mask, rectifier, P, config.refine_iterations, config.ablation,
            config.refine_orientation,
        )
        record.refine_iterations = used
        record.object_pose = pose
        record.area_rendered = shot.area
        record.reference_scale = reference_scale
        record.discarded_triangles = shot.discarded

    with _Stage(record, "volume"):
        record.scale = reference_scale * scale_factor(record.area_input, record.area_rendered)
        record.volume_ml = estimate_volume(record.scale, model_volume)
        record.energy_kcal = estimate_energy(rho, record.volume_ml)

    if config.debug_render or config.overlay:
        with _Stage(record, "debug-output"):
            bits, _ = rasterize_mesh(
                apply_object_pose(mesh, pose, reference_scale), P, width, height
            )
            _write_debug(scene, mask, Silhouette(bits), config)


def _write_debug(scene: Scene, mask: Silhouette, rendered: Silhouette, config: RunConfig) -> None:
    out = Path(config.output_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    save_mask(rendered, out / f"{scene.scene_id}_render.png")
    if not config.overlay and not scene.image:
        return
    try:
        if scene.image is None:
            raise InputError("no RGB image for overlay")
        save_overlay(scene.image, rendered, out / f"{scene.scene_id}_overlay.png")
    except (OSError, InputError) as exc:
        if config.overlay:
            raise InputError(f"overlay failed for {scene.scene_id}: {exc}") from None
        logger.warning("skipping overlay for %s: %s", scene.scene_id, exc)
