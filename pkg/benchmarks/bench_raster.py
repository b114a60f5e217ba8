"""Compare the compiled and numpy rasterizers on posed fixture meshes.

    python3 benchmarks/bench_raster.py [--repeat 5]

Both backends must produce identical masks; the script exits 1 otherwise.
"""

from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from monovol import _core
from monovol.mesh import apply_object_pose, canonicalize
from monovol.objectpose import ObjectPose
from monovol.render import project_homogeneous, projection_matrix
from monovol.shapes import cube, icosphere, torus
from monovol.synth import DEFAULT_INTRINSICS, PHONE_INTRINSICS, canonical_scene


def cases():
    for name, mesh in (("cube", cube()), ("icosphere-3", icosphere(3)),
                       ("icosphere-5", icosphere(5)), ("torus", torus())):
        for K, scale in ((DEFAULT_INTRINSICS, 1.0), (PHONE_INTRINSICS, 4.0)):
            scene = canonical_scene(mesh, scale, K)
            posed = apply_object_pose(canonicalize(mesh), scene.object_pose, scale)
            hom = project_homogeneous(projection_matrix(K, scene.extrinsics), posed.vertices)
            xy = hom[:, :2] / hom[:, 2:]
            yield f"{name} {K.image_width}x{K.image_height} k={scale:g}", xy, posed.triangles, K


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if _core.BACKEND != "cython":
        print("compiled kernel not built; only the numpy backend is available")
        return 1
    print(f"{'case':<34}{'tris':>7}{'px':>9}{'cython ms':>11}{'numpy ms':>10}{'speedup':>9}")
    ok = True
    for label, xy, tris, K in cases():
        w, h = K.image_width, K.image_height
        a = _core.rasterize(xy, tris, w, h, backend="cython")
        b = _core.rasterize(xy, tris, w, h, backend="python")
        ok &= bool(np.array_equal(a, b))
        t = {}
        for backend in ("cython", "python"):
            runs = timeit.repeat(lambda: _core.rasterize(xy, tris, w, h, backend=backend),
                                 number=1, repeat=args.repeat)
            t[backend] = 1e3 * min(runs)
        print(f"{label:<34}{len(tris):>7}{int(a.sum()):>9}{t['cython']:>11.2f}"
              f"{t['python']:>10.2f}{t['python'] / t['cython']:>8.1f}x")
    print("masks identical" if ok else "MASKS DIFFER")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
