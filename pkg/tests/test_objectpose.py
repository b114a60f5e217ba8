import logging
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from PIL import Image

from monovol.errors import DegenerateMaskError, EmptyMaskError, InputError
from monovol.geometry import Homography
from monovol.objectpose import (
    ABLATION_ROWS,
    Ablation,
    ObjectPose,
    Silhouette,
    estimate_object_pose,
    image_angle_to_theta_z,
    largest_component,
    load_mask,
    mask_centroid,
    planar_translation,
    principal_axis_angle,
    save_mask,
    wrap_half_turn,
)

HALF = math.pi / 2


def blank(h=64, w=64):
    return np.zeros((h, w), dtype=bool)


def ellipse(angle, a=24.0, b=6.0, size=80):
    v, u = np.mgrid[0:size, 0:size].astype(float)
    c = (size - 1) / 2
    du, dv = u - c, v - c
    x = du * math.cos(angle) + dv * math.sin(angle)
    y = -du * math.sin(angle) + dv * math.cos(angle)
    return Silhouette((x / a) ** 2 + (y / b) ** 2 <= 1.0)


# -- silhouettes and files ----------------------------------------------------

def test_silhouette_basics():
    bits = blank(4, 6)
    bits[1, 2] = bits[3, 5] = True
    m = Silhouette(bits)
    assert (m.width, m.height, m.area) == (6, 4, 2)
    np.testing.assert_array_equal(m.foreground_pixels(), [[2, 1], [5, 3]])
    assert m == Silhouette(bits.copy())
    with pytest.raises(InputError):
        Silhouette(np.zeros(5))


def test_mask_png_round_trip_and_threshold(tmp_path):
    arr = np.array([[0, 127, 128, 255]], dtype=np.uint8)
    Image.fromarray(arr).save(tmp_path / "m.png")
    m = load_mask(tmp_path / "m.png")
    np.testing.assert_array_equal(m.bits, [[False, False, True, True]])
    save_mask(m, tmp_path / "out.png")
    assert load_mask(tmp_path / "out.png") == m


def test_rgb_mask_is_converted_with_warning(tmp_path, caplog):
    rgb = np.zeros((3, 3, 3), dtype=np.uint8)
    rgb[1, 1] = 255
    Image.fromarray(rgb).save(tmp_path / "rgb.png")
    with caplog.at_level(logging.WARNING):
        m = load_mask(tmp_path / "rgb.png")
    assert m.area == 1
    assert "converting" in caplog.text


def test_missing_mask_names_path(tmp_path):
    with pytest.raises(InputError, match="nope.png"):
        load_mask(tmp_path / "nope.png")


def test_largest_component_uses_8_connectivity():
    bits = blank(10, 10)
    bits[0, 0] = bits[1, 1] = bits[2, 2] = True   # diagonal chain: one component
    bits[6:8, 6:8] = True                          # 4 px blob
    kept = largest_component(Silhouette(bits))
    assert kept.area == 4
    bits[3, 3] = bits[4, 4] = True                 # chain grows to 5 px
    assert largest_component(Silhouette(bits)).area == 5


# -- orientation ---------------------------------------------------------------

@pytest.mark.parametrize("angle,expected", [
    (0.0, 0.0), (HALF, -HALF), (-HALF, -HALF), (3 * math.pi / 4, -math.pi / 4),
    (math.pi, 0.0), (-math.pi / 4, -math.pi / 4), (5 * math.pi, 0.0),
])
def test_wrap_half_turn_values(angle, expected):
    assert wrap_half_turn(angle) == pytest.approx(expected, abs=1e-12)


@given(st.floats(-100, 100))
def test_wrap_half_turn_range_and_period(a):
    w = wrap_half_turn(a)
    assert -HALF <= w < HALF
    k = (a - w) / math.pi
    assert k == pytest.approx(round(k), abs=1e-9)


def test_principal_axis_of_bars():
    h = blank()
    h[30:33, 10:50] = True
    assert principal_axis_angle(Silhouette(h)) == 0.0
    assert principal_axis_angle(Silhouette(h.T)) == -HALF
    d = np.eye(40, dtype=bool)  # u = v: points down-right in the image
    assert principal_axis_angle(Silhouette(d)) == pytest.approx(math.pi / 4)
    assert principal_axis_angle(Silhouette(d[::-1])) == pytest.approx(-math.pi / 4)


def test_isotropic_mask_returns_zero():
    sq = blank()
    sq[10:30, 20:40] = True
    assert principal_axis_angle(Silhouette(sq)) == 0.0


def test_orientation_errors():
    with pytest.raises(EmptyMaskError):
        principal_axis_angle(Silhouette(blank()))
    one = blank()
    one[3, 3] = True
    with pytest.raises(DegenerateMaskError):
        principal_axis_angle(Silhouette(one))


@given(st.floats(-HALF + 0.01, HALF - 0.01))
def test_principal_axis_of_rasterised_ellipse(phi):
    assert principal_axis_angle(ellipse(phi)) == pytest.approx(phi, abs=math.radians(1.0))


def test_image_angle_sign_flip():
    assert image_angle_to_theta_z(0.3) == pytest.approx(-0.3)
    assert image_angle_to_theta_z(-HALF) == -HALF  # -(-pi/2) wraps back


# -- translation ------------------------------------------------------------------

def test_centroid_and_translation():
    bits = blank(20, 20)
    bits[4:8, 10:14] = True
    m = Silhouette(bits)
    np.testing.assert_allclose(mask_centroid(m), [11.5, 5.5])
    H = Homography(np.diag([0.5, 0.25, 1.0]))
    assert planar_translation(m, H) == pytest.approx((5.75, 1.375))
    assert planar_translation(m, H, (1.0, 1.0)) == pytest.approx((4.75, 0.375))
    with pytest.raises(EmptyMaskError):
        mask_centroid(Silhouette(blank()))


def test_estimate_object_pose_and_ablation():
    m = ellipse(0.4)
    H = Homography(np.eye(3))
    pose = estimate_object_pose(m, H)
    assert pose.tx == pytest.approx(39.5) and pose.ty == pytest.approx(39.5)
    assert pose.theta_z == pytest.approx(-0.4, abs=0.02)
    assert estimate_object_pose(m, H, ablation=Ablation(zero_ty=True)) == ObjectPose(pose.tx, 0.0, pose.theta_z)
    assert estimate_object_pose(m, H, ablation=Ablation(True, True, True)) == ObjectPose()
    with pytest.raises(EmptyMaskError):
        estimate_object_pose(Silhouette(blank()), H, ablation=Ablation(True, True))


def test_ablation_parsing():
    assert Ablation.parse("zero_tx,zero_theta") == Ablation(zero_tx=True, zero_theta_z=True)
    assert Ablation.parse(["ty"]) == Ablation(zero_ty=True)
    assert Ablation.parse({"zero_tx": True, "zero_ty": False}) == Ablation(zero_tx=True)
    assert Ablation.parse("none") == Ablation() == Ablation.parse(None)
    assert (Ablation(zero_tx=True) | Ablation(zero_ty=True)).tag == "zero_tx+zero_ty"
    with pytest.raises(InputError):
        Ablation.parse("zero_z")


def test_ablation_rows_cover_the_table():
    assert [a.tag for a in ABLATION_ROWS] == [
        "zero_tx", "zero_ty", "zero_tx+zero_ty", "zero_theta_z", "none"]


def test_object_pose_validation():
    with pytest.raises(InputError):
        ObjectPose(0, 0, HALF)
    with pytest.raises(InputError):
        ObjectPose(math.nan, 0, 0)
    assert ObjectPose(1, 2, 0.1).ablate(Ablation(zero_theta_z=True)) == ObjectPose(1, 2, 0)
