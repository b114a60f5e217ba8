import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from monovol import _core
from monovol.errors import InputError
from monovol.geometry import BoardSpec, look_at
from monovol.mesh import mesh_volume
from monovol.objectpose import ObjectPose
from monovol.shapes import cube, torus
from monovol.synth import (
    DEFAULT_INTRINSICS,
    PHONE_INTRINSICS,
    RandomSceneParams,
    canonical_scene,
    make_scene,
    random_scene,
)

ROOT = Path(__file__).resolve().parents[1]


def test_canonical_scene_geometry():
    s = canonical_scene(cube(), 1.5)
    assert s.true_volume == pytest.approx(1.5**3)
    assert s.mask.area > 0 and s.corners.shape == (12, 2)
    assert s.camera_position[2] == pytest.approx(50.0)
    # object sits off the board, beyond its X extent
    assert s.object_pose.tx < 0
    assert s.K is PHONE_INTRINSICS


def test_random_scene_is_seeded():
    a = random_scene(torus(), 0.8, np.random.default_rng(4))
    b = random_scene(torus(), 0.8, np.random.default_rng(4))
    assert a.mask == b.mask and np.array_equal(a.corners, b.corners)
    assert a.true_volume == pytest.approx(0.8**3 * mesh_volume(torus()), rel=1e-12)
    assert -math.pi / 2 <= a.object_pose.theta_z < math.pi / 2


def test_random_scene_stays_in_frame():
    rng = np.random.default_rng(0)
    for _ in range(10):
        s = random_scene(cube(), rng.uniform(0.5, 2.0), rng, DEFAULT_INTRINSICS)
        assert np.all(s.corners >= 0) and np.all(s.corners[:, 0] < 960) and np.all(s.corners[:, 1] < 720)
        assert not s.mask.bits[0].any() and not s.mask.bits[-1].any()


def test_unplaceable_scenes_raise():
    with pytest.raises(InputError, match="could not place"):
        random_scene(cube(), 1.0, np.random.default_rng(0),
                     params=RandomSceneParams(distance_factor=(0.05, 0.05), min_distance=0.5, max_attempts=3))
    away = look_at([0.0, -30.0, 5.0], [0.0, -60.0, 5.0])
    with pytest.raises(InputError, match="faces away"):
        make_scene(cube(), 1.0, ObjectPose(-3.0, 1.0, 0.0), away, board=BoardSpec())


@pytest.mark.skipif(_core.BACKEND != "cython", reason="compiled kernel not built")
def test_benchmark_cases_agree():
    sys.path.insert(0, str(ROOT / "benchmarks"))
    try:
        import bench_raster
    finally:
        sys.path.pop(0)
    for _, xy, tris, K in bench_raster.cases():
        a = _core.rasterize(xy, tris, K.image_width, K.image_height, backend="cython")
        b = _core.rasterize(xy, tris, K.image_width, K.image_height, backend="python")
        np.testing.assert_array_equal(a, b)


def test_pure_python_fallback_is_selected_by_env():
    env = dict(os.environ, MONOVOL_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from monovol import _core; print(_core.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
