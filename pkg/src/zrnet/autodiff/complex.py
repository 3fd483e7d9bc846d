"""Complex values as (re, im) tensor pairs, and the 2-D DFT pair.

Only ``fft2``/``ifft2`` are primitives; the remaining complex operations are
compositions of real ops, so their gradients come for free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeError
from . import ops
from .tensor import Tensor, as_tensor, record


@dataclass(frozen=True)
class ComplexTensor:
    re: Tensor
    im: Tensor

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise ShapeError(f"re/im shape mismatch: {self.re.shape} vs {self.im.shape}")

    @property
    def shape(self) -> tuple:
        return self.re.shape

    @classmethod
    def from_real(cls, x) -> "ComplexTensor":
        x = as_tensor(x)
        return cls(x, Tensor(np.zeros(x.shape)))

    @classmethod
    def from_numpy(cls, z: np.ndarray) -> "ComplexTensor":
        return cls(Tensor(np.real(z)), Tensor(np.imag(z)))

    def numpy(self) -> np.ndarray:
        return self.re.data + 1j * self.im.data

    def __add__(self, other: "ComplexTensor") -> "ComplexTensor":
        return ComplexTensor(self.re + other.re, self.im + other.im)

    def __sub__(self, other: "ComplexTensor") -> "ComplexTensor":
        return ComplexTensor(self.re - other.re, self.im - other.im)

    def __mul__(self, other) -> "ComplexTensor":
        if isinstance(other, ComplexTensor):
            return cmul(self, other)
        return ComplexTensor(self.re * other, self.im * other)

    __rmul__ = __mul__


def cexp(phase) -> ComplexTensor:
    """exp(i * phase) for a real phase."""
    phase = as_tensor(phase)
    return ComplexTensor(ops.cos(phase), ops.sin(phase))


def cmul(a: ComplexTensor, b: ComplexTensor) -> ComplexTensor:
    return ComplexTensor(a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re)


def abs2(z: ComplexTensor) -> Tensor:
    return ops.square(z.re) + ops.square(z.im)


def real(z: ComplexTensor) -> Tensor:
    return z.re


def imag(z: ComplexTensor) -> Tensor:
    return z.im


def _check_size(shape: tuple) -> None:
    if len(shape) < 2:
        raise ShapeError(f"fft2 needs at least 2 dimensions, got shape {shape}")
    for n in shape[-2:]:
        if n < 1 or n & (n - 1):
            raise ConfigError(f"transform sizes must be powers of two, got {shape[-2:]}")


def _as_complex(x) -> ComplexTensor:
    return x if isinstance(x, ComplexTensor) else ComplexTensor.from_real(x)


def _transform(x, forward: bool) -> ComplexTensor:
    x = _as_complex(x)
    _check_size(x.shape)
    h, w = x.shape[-2:]
    n = h * w
    z = x.re.data + 1j * x.im.data
    y = np.fft.fft2(z) if forward else np.fft.ifft2(z)
    out = ComplexTensor(Tensor(y.real.copy()), Tensor(y.imag.copy()))

    def vjp(gs):
        g_re = gs[0] if gs[0] is not None else 0.0
        g_im = gs[1] if gs[1] is not None else 0.0
        g = g_re + 1j * g_im
        # Adjoint of the unnormalized DFT is n * ifft2; of ifft2 it is fft2 / n.
        gx = np.fft.ifft2(g) * n if forward else np.fft.fft2(g) / n
        gx = np.broadcast_to(gx, x.shape)
        return gx.real.copy(), gx.imag.copy()

    record("fft2" if forward else "ifft2", (x.re, x.im), (out.re, out.im), vjp)
    return out


def fft2(x) -> ComplexTensor:
    """Unnormalized forward DFT over the last two axes."""
    return _transform(x, True)


def ifft2(x) -> ComplexTensor:
    """Inverse DFT over the last two axes, scaled by 1/(H*W)."""
    return _transform(x, False)
