"""Synthetic scenes with known answers.

A canonical mesh is scaled by ``k``, placed on the board plane with a known
object pose and rendered through a known camera. The silhouette and the
projected board corners are exactly what the estimator consumes, and the
true volume is ``k**3`` times the mesh volume.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError
from .geometry import (
    BoardSpec,
    CameraIntrinsics,
    RigidTransform,
    invert_extrinsics,
    orbit_camera,
    project_points,
)
from .mesh import TriangleMesh, apply_object_pose, canonicalize, mesh_volume, write_obj
from .objectpose import ObjectPose, Silhouette, save_mask
from .render import projection_matrix, render_silhouette

DEFAULT_INTRINSICS = CameraIntrinsics(800.0, 800.0, 479.5, 359.5, 0.0, 960, 720)
# 12 MP smartphone-like camera, roughly 67 degrees horizontal field of view
PHONE_INTRINSICS = CameraIntrinsics(3000.0, 3000.0, 1999.5, 1499.5, 0.0, 4000, 3000)

# pixels kept clear between the scene content and the image border
BORDER_MARGIN = 4


@dataclass(frozen=True)
class SyntheticScene:
    mask: Silhouette
    corners: np.ndarray
    K: CameraIntrinsics
    extrinsics: RigidTransform
    mesh: TriangleMesh  # canonical, unscaled
    scale: float
    object_pose: ObjectPose
    board: BoardSpec = field(default_factory=BoardSpec)

    @property
    def true_volume(self) -> float:
        return self.scale**3 * mesh_volume(self.mesh)

    @property
    def camera_position(self) -> np.ndarray:
        return invert_extrinsics(self.extrinsics).translation


def make_scene(
    mesh: TriangleMesh,
    scale: float,
    object_pose: ObjectPose,
    extrinsics: RigidTransform,
    K: CameraIntrinsics = DEFAULT_INTRINSICS,
    board: BoardSpec | None = None,
    *,
    canonical: bool = False,
) -> SyntheticScene:
    """Render one scene; raises InputError if the board or object leaves the frame."""
    board = board or BoardSpec()
    if not canonical:
        mesh = canonicalize(mesh)
    width, height = K.image_width, K.image_height
    if width is None or height is None:
        raise InputError("synthetic intrinsics must carry image_width and image_height")
    world = board.world_points()
    cam = extrinsics.apply(world)
    if np.any(cam[:, 2] <= 0):
        raise InputError("camera faces away from the checkerboard")
    corners = project_points(K, extrinsics, world)
    if not _inside(corners, width, height):
        raise InputError("checkerboard corners fall outside the image")
    posed = apply_object_pose(mesh, object_pose, scale)
    if np.any(extrinsics.apply(posed.vertices)[:, 2] <= 0):
        raise InputError("object is not fully in front of the camera")
    obj_px = project_points(K, extrinsics, posed.vertices)
    if not _inside(obj_px, width, height):
        raise InputError("object projects outside the image")
    mask = render_silhouette(posed, projection_matrix(K, extrinsics), width, height)
    if mask.area == 0:
        raise InputError("object silhouette is empty")
    return SyntheticScene(mask, corners, K, extrinsics, mesh, float(scale), object_pose, board)


def _inside(px: np.ndarray, width: int, height: int) -> bool:
    m = BORDER_MARGIN
    return bool(
        np.all(px[:, 0] >= m) and np.all(px[:, 0] <= width - 1 - m)
        and np.all(px[:, 1] >= m) and np.all(px[:, 1] <= height - 1 - m)
    )


def canonical_scene(mesh: TriangleMesh, scale: float = 1.0, K: CameraIntrinsics = PHONE_INTRINSICS,
                    board: BoardSpec | None = None, height: float = 50.0,
                    pitch_deg: float = 45.0) -> SyntheticScene:
    """Object beside the board's right edge; camera ``height`` cm up, pitched down ``pitch_deg``."""
    board = board or BoardSpec()
    mesh = canonicalize(mesh)
    radius = scale * float(np.hypot(mesh.vertices[:, 0], mesh.vertices[:, 1]).max())
    pose = ObjectPose(-(radius + 1.0), 0.5 * (board.rows - 1) * board.spacing + 1.0, 0.0)
    target = 0.5 * (board.center + np.array([pose.tx, pose.ty, 0.0]))
    pitch = math.radians(pitch_deg)
    ext = orbit_camera(target, height / math.sin(pitch), pitch)
    return make_scene(mesh, scale, pose, ext, K, board, canonical=True)


@dataclass(frozen=True)
class RandomSceneParams:
    """Sampling ranges for :func:`random_scene` (angles in degrees, lengths in cm)."""

    elevation: tuple[float, float] = (35.0, 70.0)
    azimuth: tuple[float, float] = (-25.0, 25.0)
    roll: tuple[float, float] = (-10.0, 10.0)
    # camera distance as a multiple of the board + object span
    distance_factor: tuple[float, float] = (1.8, 3.0)
    min_distance: float = 12.0
    # object gap to the board's right edge and position along Y
    gap: tuple[float, float] = (0.5, 1.5)
    object_y: tuple[float, float] = (1.0, 3.5)
    random_theta: bool = True
    max_attempts: int = 200


def random_scene(
    mesh: TriangleMesh,
    scale: float,
    rng: np.random.Generator,
    K: CameraIntrinsics = DEFAULT_INTRINSICS,
    board: BoardSpec | None = None,
    params: RandomSceneParams | None = None,
) -> SyntheticScene:
    """Seeded random camera and object pose; resamples until the scene fits the frame."""
    board = board or BoardSpec()
    params = params or RandomSceneParams()
    mesh = canonicalize(mesh)
    radius = scale * float(np.hypot(mesh.vertices[:, 0], mesh.vertices[:, 1]).max())
    last_error = None
    for _ in range(params.max_attempts):
        tx = -(radius + rng.uniform(*params.gap))
        ty = rng.uniform(*params.object_y)
        theta = rng.uniform(-math.pi / 2, math.pi / 2) if params.random_theta else 0.0
        pose = ObjectPose(tx, ty, theta)
        board_pts = board.world_points()
        lo = np.minimum(board_pts.min(axis=0)[:2], [tx - radius, ty - radius])
        hi = np.maximum(board_pts.max(axis=0)[:2], [tx + radius, ty + radius])
        target = np.array([(lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2, 0.0])
        span = float(np.linalg.norm(hi - lo))
        distance = max(params.min_distance, span * rng.uniform(*params.distance_factor))
        ext = orbit_camera(
            target,
            distance,
            math.radians(rng.uniform(*params.elevation)),
            math.radians(rng.uniform(*params.azimuth)),
            math.radians(rng.uniform(*params.roll)),
        )
        try:
            return make_scene(mesh, scale, pose, ext, K, board, canonical=True)
        except InputError as exc:
            last_error = exc
    raise InputError(f"could not place a valid random scene: {last_error}")


def write_scene(scene: SyntheticScene, out_dir, scene_id: str, label: str | None = None,
                density: float | None = None) -> dict:
    """Write mask PNG, corner JSON, intrinsics, mesh and a manifest entry.

    Returns the manifest entry (paths relative to ``out_dir``).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    label = label or scene.mesh.label or "object"
    (out / "masks").mkdir(exist_ok=True)
    (out / "meshes").mkdir(exist_ok=True)
    mask_rel = f"masks/{scene_id}.png"
    save_mask(scene.mask, out / mask_rel)
    mesh_path = out / "meshes" / f"{label}.obj"
    if not mesh_path.exists():
        write_obj(TriangleMesh(scene.mesh.vertices, scene.mesh.triangles, label), mesh_path)
    (out / "intrinsics.json").write_text(json.dumps(scene.K.to_dict(), indent=2) + "\n")
    volume = scene.true_volume
    entry = {
        "id": scene_id,
        "image": None,
        "mask": mask_rel,
        "label": label,
        "corners": scene.corners.tolist(),
        "volume_ml": volume,
        "weight_g": volume,
        "energy_kcal": volume * density if density is not None else None,
        "split": "test",
        "synthetic": {
            "scale": scene.scale,
            "object_pose": scene.object_pose.to_dict(),
            "extrinsics": scene.extrinsics.to_dict(),
        },
    }
    (out / f"{scene_id}.corners.json").write_text(json.dumps(entry["corners"]) + "\n")
    return entry
