"""Triangle meshes: OBJ I/O, watertightness, signed volume and placement."""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError, MeshError, VolumeUndefinedError
from .objectpose import ObjectPose

logger = logging.getLogger(__name__)


def _edge_check(triangles: np.ndarray) -> tuple[bool, bool]:
    """(closed 2-manifold, consistently oriented) for a triangle index array."""
    directed = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )
    undirected = np.sort(directed, axis=1)
    _, counts = np.unique(undirected, axis=0, return_counts=True)
    closed = bool(np.all(counts == 2))
    # consistent orientation: every directed edge appears once, its reverse once
    _, dcounts = np.unique(directed, axis=0, return_counts=True)
    oriented = closed and bool(np.all(dcounts == 1))
    return closed, oriented


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    label: str = ""
    watertight: bool = field(init=False)

    def __post_init__(self):
        V = np.array(self.vertices, dtype=float).reshape(-1, 3)
        T = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(V)):
            raise MeshError("mesh has non-finite vertex coordinates")
        if len(T) < 4:
            raise MeshError(f"mesh needs at least 4 triangles, got {len(T)}")
        if T.min() < 0 or T.max() >= len(V):
            raise MeshError("triangle index out of range")
        closed, oriented = _edge_check(T)
        V.flags.writeable = False
        T.flags.writeable = False
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "triangles", T)
        object.__setattr__(self, "watertight", closed and oriented)

    def with_vertices(self, vertices) -> "TriangleMesh":
        """Same topology and label, new vertex positions."""
        V = np.array(vertices, dtype=float).reshape(self.vertices.shape)
        if not np.all(np.isfinite(V)):
            raise MeshError("mesh has non-finite vertex coordinates")
        V.flags.writeable = False
        out = object.__new__(TriangleMesh)
        object.__setattr__(out, "vertices", V)
        for name in ("triangles", "label", "watertight"):
            object.__setattr__(out, name, getattr(self, name))
        return out


def _parse_index(token: str, n_vertices: int, lineno: int) -> int:
    idx = int(token.split("/")[0])
    if idx < 0:
        idx = n_vertices + idx
    else:
        idx -= 1
    if not 0 <= idx < n_vertices:
        raise MeshError(f"line {lineno}: face index {token} out of range")
    return idx


def load_mesh(path, *, label: str | None = None, unit_scale: float = 1.0) -> TriangleMesh:
    """Load an OBJ file; polygonal faces are fan-triangulated.

    Args:
        unit_scale: multiplier taking file units to cm (0.1 for mm exports).
    """
    path = Path(path)
    if not unit_scale > 0:
        raise InputError(f"unit scale must be positive, got {unit_scale}")
    verts: list[list[float]] = []
    tris: list[tuple[int, int, int]] = []
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise MeshError(f"mesh file not found: {path}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
                if len(verts[-1]) != 3:
                    raise ValueError("vertex needs 3 coordinates")
            elif parts[0] == "f":
                idx = [_parse_index(tok, len(verts), lineno) for tok in parts[1:]]
                if len(idx) < 3:
                    raise ValueError("face needs at least 3 vertices")
                for k in range(1, len(idx) - 1):
                    tris.append((idx[0], idx[k], idx[k + 1]))
        except ValueError as exc:
            raise MeshError(f"{path}:{lineno}: cannot parse {line.strip()!r}: {exc}") from None
    mesh = TriangleMesh(
        np.asarray(verts, dtype=float) * unit_scale, np.asarray(tris, dtype=np.int64),
        label if label is not None else path.stem,
    )
    if not mesh.watertight:
        logger.warning("mesh %s is not watertight; volume queries will fail", path)
    return mesh


def write_obj(mesh: TriangleMesh, path) -> None:
    lines = [f"# {mesh.label}"] if mesh.label else []
    lines += ["v {!r} {!r} {!r}".format(*map(float, v)) for v in mesh.vertices]
    lines += ["f {} {} {}".format(*(t + 1)) for t in mesh.triangles]
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    os.replace(tmp, path)


def signed_volume(mesh: TriangleMesh) -> float:
    V, T = mesh.vertices, mesh.triangles
    v0, v1, v2 = V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]
    return float(np.einsum("ij,ij->", v0, np.cross(v1, v2))) / 6.0


def mesh_volume(mesh: TriangleMesh) -> float:
    """Enclosed volume in cm^3 (= mL) of a watertight, consistently oriented mesh."""
    if not mesh.watertight:
        raise VolumeUndefinedError(f"mesh {mesh.label!r} is not watertight; volume undefined")
    return abs(signed_volume(mesh))


def solid_centroid(mesh: TriangleMesh) -> np.ndarray:
    """Center of mass of the enclosed solid (uniform density)."""
    V, T = mesh.vertices, mesh.triangles
    # translate first so the tetrahedra fan is well conditioned
    o = V.mean(axis=0)
    v0, v1, v2 = V[T[:, 0]] - o, V[T[:, 1]] - o, V[T[:, 2]] - o
    vols = np.einsum("ij,ij->i", v0, np.cross(v1, v2)) / 6.0
    total = vols.sum()
    if abs(total) < 1e-300:
        return o
    return o + (vols[:, None] * (v0 + v1 + v2)).sum(axis=0) / (4.0 * total)


def canonicalize(mesh: TriangleMesh) -> TriangleMesh:
    """Center in x, y and rest the mesh on z = 0.

    The x-y center is the solid centroid for watertight meshes and the vertex
    mean otherwise.
    """
    c = solid_centroid(mesh) if mesh.watertight else mesh.vertices.mean(axis=0)
    shifted = mesh.vertices - np.array([c[0], c[1], 0.0])
    shifted[:, 2] -= shifted[:, 2].min()
    # second pass removes round-off left by the first subtraction
    c2 = solid_centroid(TriangleMesh(shifted, mesh.triangles)) if mesh.watertight else shifted.mean(axis=0)
    shifted[:, 0] -= c2[0]
    shifted[:, 1] -= c2[1]
    return mesh.with_vertices(shifted)


def pose_matrix(pose: ObjectPose, scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """(linear part, translation) of scale -> rotate about +Z -> translate."""
    c, s = math.cos(pose.theta_z), math.sin(pose.theta_z)
    A = scale * np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return A, np.array([pose.tx, pose.ty, 0.0])


def apply_object_pose(mesh: TriangleMesh, pose: ObjectPose, scale: float = 1.0) -> TriangleMesh:
    if not scale > 0:
        raise InputError(f"scale must be positive, got {scale}")
    A, t = pose_matrix(pose, scale)
    return mesh.with_vertices(mesh.vertices @ A.T + t)


class MeshDatabase:
    """Directory of ``<label>.obj`` files, loaded lazily and canonicalized.

    Args:
        root: directory holding the OBJ files.
        unit_scales: optional per-label multiplier to cm.
    """

    def __init__(self, root, unit_scales: dict[str, float] | None = None):
        self.root = Path(root)
        if not self.root.is_dir():
            raise InputError(f"mesh database directory not found: {self.root}")
        self.unit_scales = dict(unit_scales or {})
        self._cache: dict[str, tuple[TriangleMesh, float]] = {}

    @classmethod
    def from_meshes(cls, meshes: dict[str, TriangleMesh]) -> "MeshDatabase":
        db = cls.__new__(cls)
        db.root = None
        db.unit_scales = {}
        db._cache = {}
        for label, m in meshes.items():
            m = canonicalize(TriangleMesh(m.vertices, m.triangles, label))
            db._cache[label] = (m, mesh_volume(m))
        return db

    def labels(self) -> list[str]:
        found = set(self._cache)
        if self.root is not None:
            found.update(p.stem for p in self.root.glob("*.obj"))
        return sorted(found)

    def __contains__(self, label: str) -> bool:
        return label in self._cache or (
            self.root is not None and (self.root / f"{label}.obj").is_file()
        )

    def get(self, label: str) -> tuple[TriangleMesh, float]:
        """Canonical mesh and its volume in mL."""
        if label not in self._cache:
            if label not in self:
                raise InputError(f"no mesh for label {label!r} in {self.root}")
            mesh = load_mesh(
                self.root / f"{label}.obj", label=label,
                unit_scale=self.unit_scales.get(label, 1.0),
            )
            mesh = canonicalize(mesh)
            self._cache[label] = (mesh, mesh_volume(mesh))
        return self._cache[label]

    def __getstate__(self):
        return {"root": self.root, "unit_scales": self.unit_scales, "_cache": dict(self._cache)}

    def __setstate__(self, state):
        self.__dict__.update(state)
