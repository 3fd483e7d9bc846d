"""Minimal reverse-mode automatic differentiation on float64 numpy arrays."""

from . import ops
from .complex import ComplexTensor, abs2, cexp, cmul, fft2, ifft2, imag, real
from .gradcheck import grad_check, numeric_grad, relative_error
from .nn import conv2d, linear, upsample_nearest
from .tensor import Tape, Tensor, active_tape, as_tensor, backward

__all__ = [
    "ComplexTensor",
    "Tape",
    "Tensor",
    "abs2",
    "active_tape",
    "as_tensor",
    "backward",
    "cexp",
    "cmul",
    "conv2d",
    "fft2",
    "grad_check",
    "ifft2",
    "imag",
    "linear",
    "numeric_grad",
    "ops",
    "real",
    "relative_error",
    "upsample_nearest",
]
