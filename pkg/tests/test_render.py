import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from PIL import Image

from monovol import _core
from monovol.errors import EmptyRenderError, InputError
from monovol.geometry import CameraIntrinsics, RigidTransform, look_at
from monovol.mesh import TriangleMesh
from monovol.objectpose import Silhouette
from monovol.render import (
    projection_matrix,
    rasterize_mesh,
    rasterize_window,
    render_silhouette,
    save_overlay,
)
from monovol.shapes import cube, icosphere

BACKENDS = ["python"] + (["cython"] if _core.BACKEND == "cython" else [])
TRI = np.array([[0, 1, 2]])

ints = st.integers(0, 30)


def raster(xy, tris, w=32, h=32, backend=None):
    return _core.rasterize(np.asarray(xy, float), np.asarray(tris), w, h, backend=backend)


@pytest.mark.parametrize("backend", BACKENDS)
def test_square_takes_top_and_left_edges(backend):
    xy = [[0, 0], [4, 0], [4, 4], [0, 4]]
    m = raster(xy, [[0, 1, 2], [0, 2, 3]], 8, 8, backend)
    expected = np.zeros((8, 8), np.uint8)
    expected[:4, :4] = 1
    np.testing.assert_array_equal(m, expected)


@pytest.mark.parametrize("backend", BACKENDS)
@given(ints, ints, ints, ints)
def test_integer_rectangle_area_is_exact(backend, x0, y0, x1, y1):
    assume(x0 != x1 and y0 != y1)
    xy = [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
    m = raster(xy, [[0, 1, 2], [0, 2, 3]], backend=backend)
    assert m.sum() == abs(x1 - x0) * abs(y1 - y0)


@pytest.mark.parametrize("backend", BACKENDS)
@given(st.lists(st.tuples(ints, ints), min_size=3, max_size=3), st.integers(1, 6), st.integers(1, 6))
def test_fan_split_partitions_the_triangle(backend, pts, w1, w2):
    """Splitting a triangle at an interior point covers each pixel exactly once."""
    assume(w1 + w2 < 8)
    a, b, c = (np.array(q, float) for q in pts)
    assume((b[0] - a[0]) * (c[1] - a[1]) != (b[1] - a[1]) * (c[0] - a[0]))
    # weights over 8 keep the split point dyadic, so edge tests stay exact
    p = (w1 * a + w2 * b + (8 - w1 - w2) * c) / 8
    xy = np.array([a, b, c, p])
    whole = raster(xy, TRI, backend=backend).astype(int)
    parts = sum(raster(xy, [t], backend=backend).astype(int) for t in ([0, 1, 3], [1, 2, 3], [2, 0, 3]))
    assert parts.max() <= 1
    np.testing.assert_array_equal(parts, whole)


@pytest.mark.parametrize("backend", BACKENDS)
def test_winding_does_not_matter(backend):
    xy = [[1.3, 2.2], [20.7, 5.1], [9.9, 27.4]]
    np.testing.assert_array_equal(raster(xy, [[0, 1, 2]], backend=backend),
                                  raster(xy, [[0, 2, 1]], backend=backend))


@pytest.mark.parametrize("backend", BACKENDS)
def test_degenerate_and_offscreen_triangles(backend):
    assert raster([[0, 0], [5, 5], [10, 10]], TRI, backend=backend).sum() == 0
    assert raster([[0, 0], [np.nan, 5], [10, 1]], TRI, backend=backend).sum() == 0
    assert raster([[-50, -50], [-40, -50], [-40, -40]], TRI, backend=backend).sum() == 0
    # clipped: the part inside the 32x32 frame is a 32x32 square minus nothing
    big = raster([[-100, -100], [200, -100], [-100, 200]], TRI, backend=backend)
    assert big.sum() == 32 * 32


@given(st.lists(st.floats(-5, 40, allow_nan=False), min_size=12, max_size=12))
def test_backends_agree(coords):
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernel not built")
    xy = np.array(coords).reshape(6, 2)
    tris = [[0, 1, 2], [3, 4, 5], [0, 4, 2]]
    np.testing.assert_array_equal(raster(xy, tris, backend="cython"), raster(xy, tris, backend="python"))


def test_unknown_backend():
    with pytest.raises(ValueError):
        raster([[0, 0], [1, 0], [0, 1]], TRI, backend="gpu")


# -- mesh rendering ---------------------------------------------------------------

K = CameraIntrinsics(1000.0, 1000.0, 319.5, 239.5, 0.0, 640, 480)


def test_far_sphere_covers_its_disk():
    """A ball of radius 1 at distance 20 covers ~pi (f r / d)^2 pixels."""
    E = look_at([0.0, -20.0, 0.0], [0.0, 0.0, 0.0])
    sil = render_silhouette(icosphere(4), projection_matrix(K, E), 640, 480)
    d, r = 20.0, 1.0
    radius_px = 1000.0 * r / math.sqrt(d * d - r * r)  # tangent-cone silhouette
    assert sil.area == pytest.approx(math.pi * radius_px**2, rel=0.01)
    ys, xs = np.nonzero(sil.bits)
    assert xs.mean() == pytest.approx(319.5, abs=0.5) and ys.mean() == pytest.approx(239.5, abs=0.5)


def test_window_matches_full_frame():
    E = look_at([3.0, -12.0, 6.0], [0.5, 0.5, 0.5])
    P = projection_matrix(K, E)
    full, disc = rasterize_mesh(cube(), P, 640, 480)
    win, x0, y0, _ = rasterize_window(cube(), P, 640, 480)
    assert disc == 0 and full.sum() == win.sum() > 0
    np.testing.assert_array_equal(full[y0:y0 + win.shape[0], x0:x0 + win.shape[1]], win)


def test_triangles_behind_camera_are_discarded():
    E = RigidTransform(np.eye(3), [-0.5, -0.5, -0.5])  # camera at the cube's centre, looking up
    m = cube()
    _, discarded = rasterize_mesh(m, projection_matrix(K, E), 640, 480)
    assert 0 < discarded < len(m.triangles)
    behind = RigidTransform(np.eye(3), [0.0, 0.0, -5.0])
    with pytest.raises(EmptyRenderError):
        rasterize_mesh(m, projection_matrix(K, behind), 640, 480)


def test_offscreen_mesh_renders_empty(caplog):
    E = look_at([0.0, -10.0, 0.0], [0.0, 0.0, 0.0])
    shifted = TriangleMesh(cube().vertices + [100.0, 0, 0], cube().triangles)
    sil = render_silhouette(shifted, projection_matrix(K, E), 640, 480)
    assert sil.area == 0 and "empty" in caplog.text
    with pytest.raises(InputError):
        rasterize_mesh(cube(), projection_matrix(K, E), 0, 480)


def test_overlay(tmp_path):
    Image.fromarray(np.zeros((20, 30, 3), np.uint8)).save(tmp_path / "img.png")
    bits = np.zeros((20, 30), bool)
    bits[5:15, 5:25] = True
    save_overlay(tmp_path / "img.png", Silhouette(bits), tmp_path / "ov.png")
    ov = np.array(Image.open(tmp_path / "ov.png"))
    red = (ov[..., 0] == 255)
    assert red.sum() == 2 * (10 + 20) - 4  # boundary ring only
    with pytest.raises(InputError):
        save_overlay(tmp_path / "img.png", Silhouette(bits[:10]), tmp_path / "x.png")
