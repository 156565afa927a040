import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import bilinear_reference, clahe_reference, round_half_up
from petl.errors import LandmarkBoundsError
from petl.preprocess import (bilinear_resize, clahe, clahe_tile_luts, contrast_stretch, denormalize_input, enhance,
                             hist_equalize, normalize_input, normalize_landmarks, prepare_input, replicate_channels,
                             resize_to)

gray_images = arrays(np.uint8, st.tuples(st.integers(8, 24), st.integers(8, 24)))


def test_replicate_channels():
    assert replicate_channels(np.array([[7]], dtype=np.uint8)).tolist() == [[[7, 7, 7]]]
    img = np.random.default_rng(0).integers(0, 256, (5, 6)).astype(np.uint8)
    out = replicate_channels(img)
    assert np.array_equal(out[..., 0], out[..., 1]) and np.array_equal(out[..., 1], out[..., 2])
    assert out.astype(np.int64).sum() == 3 * img.astype(np.int64).sum()


def test_resize_identity_and_constant():
    img = np.random.default_rng(1).integers(0, 256, (7, 9)).astype(np.uint8)
    assert np.array_equal(bilinear_resize(img, 9, 7), img)
    const = np.full((5, 5), 93, dtype=np.uint8)
    for w, h in ((1, 1), (3, 8), (17, 11)):
        assert np.all(bilinear_resize(const, w, h) == 93)


def test_resize_2x2_to_4x4_hand_values():
    img = np.array([[0, 100], [100, 200]], dtype=np.uint8)
    # half-pixel centers: output samples sit at source coords -0.25, 0.25, 0.75, 1.25 (clamped to [0, 1])
    expected = np.array([
        [0, 25, 75, 100],
        [25, 50, 100, 125],
        [75, 100, 150, 175],
        [100, 125, 175, 200],
    ])
    assert bilinear_resize(img, 4, 4).tolist() == expected.tolist()


@settings(max_examples=40, deadline=None)
@given(gray_images, st.integers(1, 30), st.integers(1, 30))
def test_resize_matches_reference(img, w, h):
    assert np.array_equal(bilinear_resize(img, w, h), round_half_up(bilinear_reference(img, w, h)))


def test_resize_exact_half_rounds_up():
    # output row 3 of 12 samples source row 5 + 11/12 at column 1.5: 84/12 + 42 * 11/12 = 45.5 exactly
    img = np.full((22, 8), 84, dtype=np.uint8)
    img[6, 1] = 0
    assert bilinear_resize(img, 2, 12)[3, 0] == 46


def test_resize_zero_dimension_errors():
    with pytest.raises(ValueError):
        bilinear_resize(np.zeros((4, 4), np.uint8), 0, 4)


def test_resize_round_trip_on_smooth_image():
    yy, xx = np.mgrid[0:32, 0:40]
    img = (127 + 60 * np.sin(xx / 9.0) * np.cos(yy / 7.0)).astype(np.uint8)
    back = bilinear_resize(bilinear_resize(img, 80, 64), 40, 32)
    assert np.abs(back.astype(int) - img.astype(int)).max() <= 2


def test_resize_to_halves_before_final_step():
    img = np.zeros((640, 640), dtype=np.uint8)
    img[:, 301] = 255  # one-pixel line
    out = resize_to(img, 160)
    assert out.shape == (160, 160) and out.max() > 0


# --- contrast enhancement ------------------------------------------------------

@pytest.mark.parametrize("fn", [clahe, hist_equalize, contrast_stretch])
def test_constant_image_unchanged(fn):
    img = np.full((16, 16), 77, dtype=np.uint8)
    assert np.array_equal(fn(img), img)
    assert np.array_equal(fn(fn(img)), img)


def test_clahe_two_tone_matches_reference():
    img = np.full((16, 16), 60, dtype=np.uint8)
    img[:, 8:] = 180
    img[5:11, 3:13] = 120
    assert np.array_equal(clahe(img), clahe_reference(img))


def test_clahe_output_range_and_tile_grid_error():
    img = np.random.default_rng(2).integers(0, 256, (20, 20)).astype(np.uint8)
    out = clahe(img)
    assert out.dtype == np.uint8
    with pytest.raises(ValueError):
        clahe(np.zeros((4, 20), dtype=np.uint8))


def test_clahe_luts_monotone():
    img = np.random.default_rng(3).integers(0, 256, (32, 32)).astype(np.uint8)
    luts = clahe_tile_luts(img)
    assert luts.shape == (8, 8, 256)
    assert np.all(np.diff(luts, axis=-1) >= 0) and luts.min() >= 0 and luts.max() <= 255


@settings(max_examples=25, deadline=None)
@given(gray_images)
def test_clahe_matches_reference_property(img):
    assert np.array_equal(clahe(img), clahe_reference(img))


def test_hist_equalize_ramp_within_one_level():
    ramp = np.arange(256, dtype=np.uint8).reshape(16, 16)
    assert np.abs(hist_equalize(ramp).astype(int) - ramp.astype(int)).max() <= 1


def test_contrast_stretch_endpoints():
    img = np.full((10, 10), 128, dtype=np.uint8)
    img.flat[:50] = np.linspace(50, 205, 50).astype(np.uint8)
    img.flat[50:] = np.linspace(50, 205, 50).astype(np.uint8)
    lo, hi = np.percentile(img, [2, 98])
    out = contrast_stretch(img)
    assert out[img <= lo].max() == 0 and out[img >= hi].min() == 255
    assert out[img == 50].max() == 0 and out[img == 205].min() == 255


def test_enhance_dispatch():
    img = np.random.default_rng(4).integers(0, 256, (16, 16)).astype(np.uint8)
    assert np.array_equal(enhance(img, "none"), img)
    assert np.array_equal(enhance(img, "he"), hist_equalize(img))
    with pytest.raises(ValueError):
        enhance(img, "gamma")


# --- normalization -----------------------------------------------------------------

def test_normalize_input_endpoints():
    np.testing.assert_array_equal(normalize_input(np.array([0.0, 255.0, 127.5])), [-1.0, 1.0, 0.0])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 6, elements=st.floats(0, 255)))
def test_normalize_denormalize_identity(x):
    np.testing.assert_allclose(denormalize_input(normalize_input(x)), x.astype(np.float32), rtol=1e-6, atol=1e-4)


def test_normalize_landmarks_examples():
    pts = np.array([[0.0, 0.0], [160.0, 160.0], [80.0, 40.0]])
    np.testing.assert_array_equal(normalize_landmarks(pts, 160, 160), [[0, 0], [1, 1], [0.5, 0.25]])


def test_landmarks_clamped_within_tolerance_and_rejected_beyond():
    out = normalize_landmarks(np.array([[-1.5, 161.0], [10.0, 10.0]]), 160, 160)
    np.testing.assert_array_equal(out[0], [0.0, 1.0])
    with pytest.raises(LandmarkBoundsError) as e:
        normalize_landmarks(np.array([[10.0, 10.0], [163.0, 5.0]]), 160, 160)
    assert e.value.index == 1


def test_prepare_input_shape_and_range():
    img = np.random.default_rng(5).integers(0, 256, (200, 200)).astype(np.uint8)
    x = prepare_input(img, size=32)
    assert x.shape == (32, 32, 3) and x.dtype == np.float32
    assert x.min() >= -1 and x.max() <= 1
