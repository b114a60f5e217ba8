"""Closed test meshes with known volumes."""

from __future__ import annotations

import math

import numpy as np

from .mesh import TriangleMesh


def cube(size: float = 1.0, label: str = "cube") -> TriangleMesh:
    """Axis-aligned cube [0, size]^3 with outward-facing triangles."""
    V = np.array(
        [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]],
        dtype=float,
    ) * size
    T = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # bottom
            [4, 5, 6], [4, 6, 7],  # top
            [0, 1, 5], [0, 5, 4],  # y = 0
            [1, 2, 6], [1, 6, 5],  # x = 1
            [2, 3, 7], [2, 7, 6],  # y = 1
            [3, 0, 4], [3, 4, 7],  # x = 0
        ]
    )
    return TriangleMesh(V, T, label)


def icosphere(subdivisions: int = 3, radius: float = 1.0, label: str = "icosphere") -> TriangleMesh:
    """Icosahedron refined ``subdivisions`` times; 20 * 4**subdivisions faces."""
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    V = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = V[a] + V[b]
                V.append(m / np.linalg.norm(m))
                cache[key] = len(V) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return TriangleMesh(np.array(V) * radius, np.array(faces), label)


def torus(
    major_radius: float = 1.0,
    minor_radius: float = 0.4,
    segments: int = 48,
    rings: int = 24,
    label: str = "torus",
) -> TriangleMesh:
    """Torus around the z axis. Enclosed volume tends to 2 pi^2 R r^2."""
    i, j = np.meshgrid(np.arange(segments), np.arange(rings), indexing="ij")
    u = 2 * np.pi * i / segments
    v = 2 * np.pi * j / rings
    x = (major_radius + minor_radius * np.cos(v)) * np.cos(u)
    y = (major_radius + minor_radius * np.cos(v)) * np.sin(u)
    z = minor_radius * np.sin(v)
    V = np.column_stack([x.ravel(), y.ravel(), z.ravel()])

    def idx(a, b):
        return (a % segments) * rings + (b % rings)

    faces = []
    for a in range(segments):
        for b in range(rings):
            p, q, r, s = idx(a, b), idx(a + 1, b), idx(a + 1, b + 1), idx(a, b + 1)
            faces += [(p, q, r), (p, r, s)]
    return TriangleMesh(V, np.array(faces), label)


FIXTURES = {
    "cube": cube,
    "icosphere": icosphere,
    "torus": torus,
}


def fixture(name: str) -> TriangleMesh:
    try:
        return FIXTURES[name]()
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}") from None
