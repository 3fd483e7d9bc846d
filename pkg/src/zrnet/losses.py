"""Training objectives: image L1, coefficient MSE and the Fourier alignment terms.

Each Fourier term is the mean absolute difference of the real parts plus the
mean absolute difference of the imaginary parts of two blurred-image spectra,
averaged over every frequency bin and over the batch.  Blurring is circular
convolution with the unit-sum PSF built from a coefficient vector, so the
spectrum of ``I (*) A(Z)`` is ``F(I) * F(A(Z))``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, NamedTuple

from .autodiff import ComplexTensor, Tensor, ops
from .errors import ConfigError, ShapeError
from .optics import OpticsConfig, blurred_spectrum, psf_tensor

LAMBDA_MSE = 0.5
LAMBDA_FAA = 0.01
PHASES = ("pretrain", "finetune")


@dataclass(frozen=True)
class FaaFlags:
    r: bool = True
    c: bool = True
    z: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LossBreakdown:
    l1_image: float
    mse_coeffs: float
    faa_r: float
    faa_c: float
    faa_z: float
    faa_total: float
    total: float

    def to_dict(self) -> dict:
        return asdict(self)


class FaaTerms(NamedTuple):
    faa_r: Tensor
    faa_c: Tensor
    faa_z: Tensor
    faa_total: Tensor


def _check_same(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def base_losses(restored, target, pred_coeffs, gt_coeffs):
    """(mean |I_R - I_GT|, mean (Z_P - Z_GT)^2)."""
    restored, target = ops.as_tensor(restored), ops.as_tensor(target)
    pred_coeffs, gt_coeffs = ops.as_tensor(pred_coeffs), ops.as_tensor(gt_coeffs)
    _check_same(restored, target, "image L1")
    _check_same(pred_coeffs, gt_coeffs, "coefficient MSE")
    l1 = ops.mean(ops.abs(restored - target))
    mse = ops.mean(ops.square(pred_coeffs - gt_coeffs))
    return l1, mse


def spectral_l1(a: ComplexTensor, b: ComplexTensor) -> Tensor:
    return ops.mean(ops.abs(a.re - b.re)) + ops.mean(ops.abs(a.im - b.im))


def faa_loss(restored, target, pred_coeffs, gt_coeffs, optics: OpticsConfig,
             flags: FaaFlags = FaaFlags()) -> FaaTerms:
    """Restoration, cross-verification and Zernike spectral terms.

    Images are (B, H, W) or (H, W); coefficients (B, 25) or (25,).
    """
    restored, target = ops.as_tensor(restored), ops.as_tensor(target)
    pred_coeffs, gt_coeffs = ops.as_tensor(pred_coeffs), ops.as_tensor(gt_coeffs)
    _check_same(restored, target, "FAA images")
    _check_same(pred_coeffs, gt_coeffs, "FAA coefficients")
    zero = Tensor(0.0)

    need_gt_psf = flags.r or flags.c or flags.z
    need_pred_psf = flags.c or flags.z
    psf_gt = psf_tensor(gt_coeffs, optics) if need_gt_psf else None
    psf_pred = psf_tensor(pred_coeffs, optics) if need_pred_psf else None

    restored_gt = blurred_spectrum(restored, psf_gt) if (flags.r or flags.c) else None
    target_gt = blurred_spectrum(target, psf_gt) if (flags.r or flags.z) else None
    target_pred = blurred_spectrum(target, psf_pred) if need_pred_psf else None

    term_r = spectral_l1(restored_gt, target_gt) if flags.r else zero
    term_c = spectral_l1(restored_gt, target_pred) if flags.c else zero
    term_z = spectral_l1(target_gt, target_pred) if flags.z else zero
    return FaaTerms(term_r, term_c, term_z, term_r + term_c + term_z)


def total_loss(l1, mse, faa_total, phase: str = "finetune",
               lambda_mse: float = LAMBDA_MSE, lambda_faa: float = LAMBDA_FAA):
    """Weighted objective; the pretraining phase drops the Fourier term."""
    if phase not in PHASES:
        raise ConfigError(f"phase must be one of {PHASES}, got {phase!r}")
    total = l1 + lambda_mse * mse
    if phase == "finetune":
        total = total + lambda_faa * faa_total
    return total


def compute_losses(restored, target, pred_coeffs, gt_coeffs, optics: OpticsConfig, phase: str,
                   flags: FaaFlags = FaaFlags(), lambda_mse: float = LAMBDA_MSE,
                   lambda_faa: float = LAMBDA_FAA):
    """Total loss tensor plus a float breakdown of every term."""
    l1, mse = base_losses(restored, target, pred_coeffs, gt_coeffs)
    if phase == "finetune":
        faa = faa_loss(restored, target, pred_coeffs, gt_coeffs, optics, flags)
    else:
        zero = Tensor(0.0)
        faa = FaaTerms(zero, zero, zero, zero)
    total = total_loss(l1, mse, faa.faa_total, phase, lambda_mse, lambda_faa)
    breakdown = LossBreakdown(l1.item(), mse.item(), faa.faa_r.item(), faa.faa_c.item(),
                              faa.faa_z.item(), faa.faa_total.item(), total.item())
    return total, breakdown


def recombine(breakdown: Dict[str, float], phase: str, lambda_mse: float = LAMBDA_MSE,
              lambda_faa: float = LAMBDA_FAA) -> float:
    """Recompute the total from logged parts (used to audit loss logs)."""
    faa = breakdown["faa_r"] + breakdown["faa_c"] + breakdown["faa_z"]
    return float(total_loss(breakdown["l1"], breakdown["mse"], faa, phase, lambda_mse, lambda_faa))

