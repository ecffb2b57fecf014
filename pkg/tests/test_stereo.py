import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import sad_cost, soft_argmin_pixel
from surgscene.errors import DimensionMismatch, InvalidArgument
from surgscene.geometry import CameraIntrinsics
from surgscene.stereo import (
    CostVolume,
    DepthMap,
    DisparityMap,
    ImageGray,
    StereoParams,
    ambiguous_pixels,
    build_cost_volume,
    depth_to_disparity,
    disparity_to_depth,
    estimate_depth,
    soft_argmin,
    winner_take_all,
)


def shifted_pair(rng, shift, h=24, w=64):
    base = rng.random((h, w + shift))
    left = base[:, :w]
    right = base[:, shift:]  # right(r, c) = left(r, c + shift)
    return ImageGray(left), ImageGray(right)


def one_hot(d_true, d_max=192, low=0.0, high=50.0, shape=(2, 3)):
    c = np.full(shape + (d_max + 1,), high)
    c[..., d_true] = low
    return CostVolume(c)


# -- cost volume --------------------------------------------------------------

def test_identical_images_zero_cost_at_zero(rng):
    img = ImageGray(rng.random((20, 30)))
    vol = build_cost_volume(img, img, 8, 3)
    assert np.all(vol.cost[1:-1, 1:-1, 0] == 0.0)


def test_shifted_pair_zero_plane(rng):
    left, right = shifted_pair(rng, 5)
    vol = build_cost_volume(left, right, 10, 5)
    half = 2
    interior = vol.cost[half:-half, 5 + half : -half, 5]
    assert np.max(interior) < 1e-12
    assert np.all(np.argmin(vol.cost[half:-half, 5 + half : -half], axis=2) == 5)


def test_constant_images_zero_interior():
    img = ImageGray(np.full((12, 40), 0.3))
    vol = build_cost_volume(img, img, 6, 3)
    assert np.all(vol.cost[1:-1, 7:-1, :] == 0.0)


def test_cost_matches_loop_oracle(rng):
    left, right = ImageGray(rng.random((9, 14))), ImageGray(rng.random((9, 14)))
    vol = build_cost_volume(left, right, 6, 3)
    L, R = left.values.tolist(), right.values.tolist()
    for r in range(9):
        for c in range(14):
            for d in range(7):
                assert vol.cost[r, c, d] == pytest.approx(sad_cost(L, R, r, c, d, 3), rel=1e-12, abs=1e-15)


def test_cost_volume_errors(rng):
    a = ImageGray(rng.random((10, 20)))
    with pytest.raises(DimensionMismatch):
        build_cost_volume(a, ImageGray(rng.random((10, 21))), 5, 3)
    with pytest.raises(InvalidArgument):
        build_cost_volume(a, a, 20, 3)
    with pytest.raises(InvalidArgument):
        build_cost_volume(a, a, 5, 4)


def test_plane_count_follows_sum_bound(rng):
    a = ImageGray(rng.random((8, 30)))
    assert build_cost_volume(a, a, 10, 3).cost.shape == (8, 30, 11)


# -- soft argmin --------------------------------------------------------------

def test_one_hot_soft_argmin():
    d = soft_argmin(one_hot(7)).disp
    assert np.all(np.abs(d - 7) < 1e-3)


def test_one_hot_analytic():
    # 192 planes at e^-50 relative weight against one at 1
    rest = sum(k for k in range(193) if k != 7)
    expected = (7 + rest * math.exp(-50)) / (1 + 192 * math.exp(-50))
    assert soft_argmin(one_hot(7)).disp[0, 0] == pytest.approx(expected, rel=1e-12)


def test_uniform_costs_give_midpoint():
    d = soft_argmin(CostVolume(np.full((3, 4, 193), 2.5))).disp
    assert np.all(d == 96.0)


def test_two_minima_symmetric():
    c = np.full((1, 1, 193), 50.0)
    c[..., 5] = c[..., 9] = 0.0
    assert abs(soft_argmin(CostVolume(c)).disp[0, 0] - 7) < 1e-3


def test_soft_argmin_matches_pixel_oracle(rng):
    c = rng.random((4, 5, 21)) * 6
    d = soft_argmin(CostVolume(c), chunk_rows=3).disp
    for r in range(4):
        for col in range(5):
            assert d[r, col] == pytest.approx(soft_argmin_pixel(c[r, col].tolist()), rel=1e-12)


@given(st.floats(-1e3, 1e3))
def test_soft_argmin_shift_invariance(offset):
    c = np.random.default_rng(1).random((2, 2, 11)) * 5
    a = soft_argmin(CostVolume(c)).disp
    b = soft_argmin(CostVolume(c + offset)).disp
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9)


@given(st.integers(0, 2**31))
def test_soft_argmin_in_range(seed):
    c = np.random.default_rng(seed).normal(scale=20, size=(2, 2, 16))
    d = soft_argmin(CostVolume(c)).disp
    assert np.all((d >= 0) & (d <= 15))


@pytest.mark.parametrize("d_true", [0, 3, 60, 192])
def test_large_gap_soft_equals_wta(d_true):
    vol = one_hot(d_true, high=20.0 + 20.0)
    assert np.max(np.abs(soft_argmin(vol).disp - winner_take_all(vol).disp)) < 1e-6


# -- winner take all ----------------------------------------------------------

def test_wta_one_hot_and_ties():
    assert np.all(winner_take_all(one_hot(42)).disp == 42)
    c = np.full((1, 1, 12), 3.0)
    c[..., 5] = c[..., 9] = 0.0
    assert winner_take_all(CostVolume(c)).disp[0, 0] == 5


def test_wta_matches_scan(rng):
    c = rng.integers(0, 4, size=(6, 7, 9)).astype(float)
    d = winner_take_all(CostVolume(c)).disp
    for r in range(6):
        for col in range(7):
            row = c[r, col].tolist()
            assert d[r, col] == row.index(min(row))


def test_wta_ambiguity_threshold():
    c = np.full((1, 2, 4), 5.0)
    c[0, 0, 1] = 0.5
    out = winner_take_all(CostVolume(c), ambiguity_threshold=1.0)
    assert out.valid.tolist() == [[True, False]]


# -- triangulation ------------------------------------------------------------

def test_depth_arithmetic():
    K = CameraIntrinsics(500.0, 500.0, 1.0, 1.0, 0.01, 3, 2)
    z = disparity_to_depth(DisparityMap.from_array(np.array([[10.0, 0.0, 0.4], [0.6, 5.0, 1.0]])), K)
    np.testing.assert_allclose(z.z, [[0.5, 0.0, 0.0], [5.0 / 0.6, 1.0, 5.0]], rtol=1e-15)


@given(st.lists(st.floats(0.6, 192.0), min_size=2, max_size=2))
def test_depth_strictly_decreasing(ds):
    K = CameraIntrinsics(500.0, 500.0, 0.0, 0.0, 0.01, 2, 1)
    a, b = sorted(ds)
    z = disparity_to_depth(DisparityMap.from_array(np.array([[a, b]])), K).z[0]
    if a < b:
        assert z[0] > z[1]


def test_depth_disparity_round_trip(rng):
    K = CameraIntrinsics(520.0, 520.0, 5.0, 5.0, 0.005, 10, 10)
    z = rng.uniform(0.05, 2.0, size=(10, 10))
    z[0, 0] = 0.0
    back = disparity_to_depth(depth_to_disparity(DepthMap(z), K), K, disp_min=0.0)
    np.testing.assert_allclose(back.z, z, rtol=1e-12)


def test_external_disparity_float_path(rng):
    K = CameraIntrinsics(520.0, 520.0, 5.0, 5.0, 0.005, 10, 10)
    d = rng.uniform(1, 50, size=(10, 10)).astype(np.float32)
    a = disparity_to_depth(DisparityMap.from_array(d), K)
    b = disparity_to_depth(DisparityMap.from_array(d.astype(np.float64)), K)
    assert np.array_equal(a.z, b.z)


# -- end to end ---------------------------------------------------------------

def test_estimate_depth_shift_five(rng):
    left, right = shifted_pair(rng, 5)
    K = CameraIntrinsics(250.0, 250.0, 32.0, 12.0, 0.01, 64, 24)  # baseline * fx = 2.5
    params = StereoParams(d_max=12, window=5)
    z = estimate_depth(left, right, K, params).z
    # residual softmax mass on neighbouring planes is ~1e-8
    np.testing.assert_allclose(z[2:-2, 5 + 2 + 12 : -2], 0.5, rtol=1e-6)


def test_identical_pair_all_invalid(rng):
    img = ImageGray(rng.random((16, 40)))
    K = CameraIntrinsics(250.0, 250.0, 20.0, 8.0, 0.01, 40, 16)
    z = estimate_depth(img, img, K, StereoParams(d_max=10, window=3))
    assert not np.any(z.valid)


def test_zero_texture_is_ambiguous():
    img = ImageGray(np.full((10, 40), 0.5))
    vol = build_cost_volume(img, img, 8, 3)
    amb = ambiguous_pixels(vol)
    assert np.all(amb[1:-1, 9:-1])
    assert np.all(soft_argmin(vol).disp[1:-1, 9:-1] == 4.0)


def test_params_validation():
    with pytest.raises(InvalidArgument):
        StereoParams(readout="median")
    with pytest.raises(InvalidArgument):
        StereoParams(window=6)
