"""Fourier-optics forward model: pupil -> PSF -> blurred, phase-diverse images.

The PSF builders are written against the autodiff ops so the same code runs
for data synthesis (no tape) and inside the loss (on a tape, differentiable
with respect to the coefficients).

Defocus diversity is applied as an additive offset on the orthonormal
defocus coefficient (ANSI 4): a "+1 rad" channel means c_4 + 1.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import zernike
from .autodiff import ComplexTensor, Tensor, abs2, cexp, fft2, ifft2, ops
from .errors import ConfigError, ShapeError

DEFAULT_BIASES = (-1.0, 0.0, 1.0)


@dataclass(frozen=True)
class OpticsConfig:
    pupil_n: int = 128
    pupil_fraction: float = 0.5
    psf_k: int = 33
    biases: tuple = field(default=DEFAULT_BIASES)

    def __post_init__(self):
        object.__setattr__(self, "biases", tuple(float(b) for b in self.biases))
        if self.psf_k < 1 or self.psf_k % 2 == 0:
            raise ConfigError(f"psf_k must be a positive odd integer, got {self.psf_k}")
        if self.pupil_n < 2 * self.psf_k:
            raise ConfigError(f"pupil_n={self.pupil_n} must be at least 2 * psf_k={2 * self.psf_k}")

    @property
    def grid(self) -> zernike.UnitDiskGrid:
        return zernike.UnitDiskGrid.build(self.pupil_n, self.pupil_fraction)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["biases"] = list(self.biases)
        return d


@dataclass(frozen=True)
class PupilFunction:
    amplitude: np.ndarray
    phase: np.ndarray


@dataclass(frozen=True)
class Psf:
    kernel: np.ndarray

    @property
    def k(self) -> int:
        return self.kernel.shape[-1]


def pupil(coeffs, config: OpticsConfig) -> PupilFunction:
    grid = config.grid
    return PupilFunction(grid.mask, zernike.compose_wavefront(coeffs, grid) * grid.mask)


def psf_tensor(coeffs, config: OpticsConfig) -> Tensor:
    """Unit-sum PSF kernels (..., K, K) from coefficient tensor (..., 25)."""
    coeffs = ops.as_tensor(coeffs)
    zernike.validate_coefficients(coeffs.data)
    grid = config.grid
    basis = zernike.mode_basis(grid)
    phase = ops.einsum("...j,jxy->...xy", coeffs, basis)
    field_ = cexp(phase) * grid.mask
    intensity = abs2(fft2(field_))
    half = config.psf_k // 2
    centred = ops.roll(intensity, (half, half), axis=(-2, -1))
    crop = centred[..., : config.psf_k, : config.psf_k]
    return crop / ops.sum(crop, axis=(-2, -1), keepdims=True)


def psf_from_coeffs(coeffs, config: OpticsConfig = OpticsConfig()) -> Psf:
    """Aberrated PSF for one coefficient vector (or a batch)."""
    return Psf(psf_tensor(Tensor(zernike.validate_coefficients(coeffs)), config).data)


def kernel_spectrum(kernel, shape: Sequence[int]) -> ComplexTensor:
    """DFT of a centre-anchored K x K kernel zero-padded to ``shape``."""
    kernel = kernel if isinstance(kernel, Tensor) else Tensor(kernel)
    k = kernel.shape[-1]
    h, w = shape
    if k > h or k > w:
        raise ShapeError(f"kernel size {k} exceeds image shape {tuple(shape)}")
    lead = [(0, 0)] * (kernel.ndim - 2)
    padded = ops.pad(kernel, lead + [(0, h - k), (0, w - k)])
    anchored = ops.roll(padded, (-(k // 2), -(k // 2)), axis=(-2, -1))
    return fft2(anchored)


def blurred_spectrum(image, kernel) -> ComplexTensor:
    """F(image (*) kernel) with circular boundaries, as a product of spectra."""
    image = image if isinstance(image, Tensor) else Tensor(image)
    return fft2(image) * kernel_spectrum(kernel, image.shape[-2:])


def convolve_tensor(image, kernel) -> Tensor:
    return ifft2(blurred_spectrum(image, kernel)).re


def convolve(image, psf) -> np.ndarray:
    """Circular convolution of an H x W image with a centre-anchored kernel."""
    kernel = psf.kernel if isinstance(psf, Psf) else np.asarray(psf, dtype=np.float64)
    image = np.asarray(image, dtype=np.float64)
    if image.ndim < 2 or kernel.ndim < 2:
        raise ShapeError("convolve needs 2-D image and kernel")
    return convolve_tensor(Tensor(image), Tensor(kernel)).data


def biased_coefficients(coeffs, biases: Sequence[float]) -> np.ndarray:
    """(len(biases), 25) copies of ``coeffs`` with defocus offsets applied."""
    c = zernike.validate_coefficients(coeffs)
    out = np.repeat(c[None, :], len(biases), axis=0)
    out[:, zernike.DEFOCUS - zernike.FIRST_MODE] += np.asarray(biases, dtype=np.float64)
    return out


def phase_diverse(image, coeffs, config: OpticsConfig = OpticsConfig()) -> np.ndarray:
    """Stack of ``image`` blurred at each defocus bias, shape (len(biases), H, W).

    Outputs are clamped to be non-negative but not rescaled.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ShapeError(f"phase_diverse expects a 2-D image, got {image.shape}")
    kernels = psf_from_coeffs(biased_coefficients(coeffs, config.biases), config).kernel
    blurred = convolve(image[None], kernels)
    return np.maximum(blurred, 0.0)
