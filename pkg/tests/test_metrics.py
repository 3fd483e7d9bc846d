import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from skimage.metrics import structural_similarity

from zrnet import metrics
from zrnet.errors import ShapeError


def brute_rms_wfe(pred, gt):
    n, m = pred.shape
    total = 0.0
    for j in range(m):
        acc = 0.0
        for i in range(n):
            acc += (pred[i, j] - gt[i, j]) ** 2
        total += acc / n
    return math.sqrt(total)


def test_psnr_known_value():
    a = np.zeros((4, 4))
    b = np.full((4, 4), 0.1)
    assert metrics.psnr(a, b) == pytest.approx(20.0)


def test_psnr_identical_is_capped(rng):
    x = rng.random((8, 8))
    assert metrics.psnr(x, x) == metrics.PSNR_CAP


def test_psnr_shape_mismatch():
    with pytest.raises(ShapeError):
        metrics.psnr(np.zeros((3, 3)), np.zeros((3, 4)))


@pytest.mark.parametrize("seed", range(4))
def test_ssim_matches_scikit_image(seed):
    r = np.random.default_rng(seed)
    a = r.random((48, 40))
    b = np.clip(a + 0.2 * r.normal(size=a.shape), 0, 1)
    expected = structural_similarity(a, b, data_range=1.0, gaussian_weights=True, sigma=1.5,
                                      use_sample_covariance=False)
    assert metrics.ssim(a, b) == pytest.approx(expected, abs=1e-10)


def test_ssim_identity_and_bounds(rng):
    a = rng.random((32, 32))
    assert metrics.ssim(a, a) == pytest.approx(1.0)
    assert -1.0 <= metrics.ssim(a, 1 - a) < 0.5


@pytest.mark.parametrize("shape", [(10, 32), (32,)])
def test_ssim_shape_errors(shape):
    with pytest.raises(ShapeError):
        metrics.ssim(np.zeros(shape), np.zeros(shape))


def test_gaussian_window():
    w = metrics.gaussian_window()
    assert w.shape == (11, 11)
    assert w.sum() == pytest.approx(1.0)
    assert np.unravel_index(np.argmax(w), w.shape) == (5, 5)


@given(st.integers(1, 60), st.integers(0, 2**31))
def test_rms_wfe_matches_double_loop(n, seed):
    r = np.random.default_rng(seed)
    pred, gt = r.uniform(-1, 1, (n, 25)), r.uniform(-1, 1, (n, 25))
    assert abs(metrics.rms_wfe(pred, gt) - brute_rms_wfe(pred, gt)) < 1e-12


def test_rms_wfe_single_vector():
    gt = np.zeros(25)
    gt[0] = 3.0
    gt[1] = 4.0
    assert metrics.rms_wfe(np.zeros(25), gt) == pytest.approx(5.0)


@given(arrays(np.float64, (5, 25), elements=st.floats(-1, 1)))
def test_rms_wfe_zero_for_exact_prediction(c):
    assert metrics.rms_wfe(c, c) == 0.0


def test_rms_wfe_shape_errors():
    with pytest.raises(ShapeError):
        metrics.rms_wfe(np.zeros((2, 25)), np.zeros((3, 25)))
    with pytest.raises(ShapeError):
        metrics.rms_wfe(np.zeros((2, 2, 25)), np.zeros((2, 2, 25)))


def test_report_threshold():
    ok = metrics.MetricsReport(30.0, 0.9, 2.9, 0.44, 10)
    bad = metrics.MetricsReport(30.0, 0.9, 2.9, 0.45, 10)
    assert ok.diffraction_limited and not bad.diffraction_limited
    assert ok.to_dict()["diffraction_limited"] is True


def test_clamp_unit():
    np.testing.assert_array_equal(metrics.clamp_unit([-0.5, 0.5, 2.0]), [0.0, 0.5, 1.0])
