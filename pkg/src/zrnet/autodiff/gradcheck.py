"""Finite-difference verification of tape gradients."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tape, Tensor


def numeric_grad(f: Callable[[Tensor], Tensor], x: np.ndarray, h: float,
                 coords: Optional[Sequence[int]] = None) -> np.ndarray:
    """Central differences of scalar ``f`` at ``x`` for the listed flat coordinates."""
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    coords = range(flat.size) if coords is None else coords
    out = np.zeros(len(coords))
    for k, i in enumerate(coords):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(Tensor(x)).item()
        flat[i] = orig - h
        fm = f(Tensor(x)).item()
        flat[i] = orig
        out[k] = (fp - fm) / (2.0 * h)
    return out


def analytic_grad(f: Callable[[Tensor], Tensor], x: np.ndarray) -> np.ndarray:
    leaf = Tensor(np.array(x, dtype=np.float64), requires_grad=True)
    with Tape() as tape:
        loss = f(leaf)
    (g,) = tape.backward(loss, wrt=[leaf])
    return g


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=np.float64).reshape(-1)
    numeric = np.asarray(numeric, dtype=np.float64).reshape(-1)
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def grad_check(f: Callable[[Tensor], Tensor], x, h: float = 1e-5,
               coords: Optional[Sequence[int]] = None) -> float:
    """Max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|)."""
    x = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    analytic = analytic_grad(f, x).reshape(-1)
    if coords is not None:
        analytic = analytic[list(coords)]
    numeric = numeric_grad(f, x, h, coords)
    return relative_error(analytic, numeric)
