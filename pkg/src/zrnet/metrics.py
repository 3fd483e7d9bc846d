"""Image-quality and wavefront-error metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import convolve2d

from .errors import ShapeError

PSNR_CAP = 100.0
DIFFRACTION_LIMIT = 0.45  # rad
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricsReport:
    psnr: float
    ssim: float
    rms_wfe_pre: float
    rms_wfe_post: float
    n_samples: int

    @property
    def diffraction_limited(self) -> bool:
        return self.rms_wfe_post < DIFFRACTION_LIMIT

    def to_dict(self) -> dict:
        d = asdict(self)
        d["diffraction_limited"] = self.diffraction_limited
        return d


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for images on a [0, 1] scale."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean SSIM over all fully contained 11x11 Gaussian windows."""
    a, b = _pair(a, b)
    if a.ndim != 2:
        raise ShapeError(f"ssim expects 2-D images, got {a.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise ShapeError(f"images must be at least {SSIM_WINDOW} pixels per side, got {a.shape}")
    win = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2

    def filt(x):
        return convolve2d(x, win, mode="valid")

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a**2
    var_b = filt(b * b) - mu_b**2
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def rms_wfe(pred, gt) -> float:
    """Residual wavefront error: sqrt of the per-mode mean squared error summed over modes.

    Inputs are (N, M) batches or single (M,) vectors.
    """
    pred, gt = _pair(pred, gt)
    if pred.ndim == 1:
        pred, gt = pred[None], gt[None]
    if pred.ndim != 2 or pred.shape[0] < 1:
        raise ShapeError(f"expected (N, M) coefficient batches, got {pred.shape}")
    per_mode = np.mean((pred - gt) ** 2, axis=0)
    return float(np.sqrt(np.sum(per_mode)))


def clamp_unit(image) -> np.ndarray:
    return np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
