"""Differentiable primitives over real tensors.

Binary elementwise ops follow numpy broadcasting; gradients are summed back
to the operand shape.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, as_tensor, record


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    out = Tensor(a.data + b.data)

    def vjp(gs):
        g = gs[0]
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    record("add", (a, b), (out,), vjp)
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    out = Tensor(a.data - b.data)

    def vjp(gs):
        g = gs[0]
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    record("sub", (a, b), (out,), vjp)
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    out = Tensor(a.data * b.data)

    def vjp(gs):
        g = gs[0]
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    record("mul", (a, b), (out,), vjp)
    return out


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    out = Tensor(a.data / b.data)

    def vjp(gs):
        g = gs[0]
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * a.data / b.data**2, b.shape) if b.requires_grad else None
        return ga, gb

    record("div", (a, b), (out,), vjp)
    return out


def neg(a) -> Tensor:
    return scale(a, -1.0)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data * c)
    record("scale", (a,), (out,), lambda gs: (gs[0] * c,))
    return out


def matmul(a, b) -> Tensor:
    """Batched matrix product over the last two axes (both operands >= 2-D)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    out = Tensor(np.matmul(a.data, b.data))

    def vjp(gs):
        g = gs[0]
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape) if b.requires_grad else None
        return ga, gb

    record("matmul", (a, b), (out,), vjp)
    return out


def einsum(spec: str, a, b) -> Tensor:
    """Two-operand einsum without repeated or operand-private summed indices."""
    a, b = as_tensor(a), as_tensor(b)
    ins, out_idx = spec.replace(" ", "").split("->")
    ia, ib = ins.split(",")
    try:
        out = Tensor(np.einsum(spec, a.data, b.data, optimize=True))
    except ValueError as exc:
        raise ShapeError(f"einsum {spec}: {exc}") from None

    def vjp(gs):
        g = gs[0]
        ga = np.einsum(f"{out_idx},{ib}->{ia}", g, b.data, optimize=True) if a.requires_grad else None
        gb = np.einsum(f"{out_idx},{ia}->{ib}", g, a.data, optimize=True) if b.requires_grad else None
        return ga, gb

    record("einsum", (a, b), (out,), vjp)
    return out


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(ax % ndim for ax in axis))


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001 - mirrors numpy
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    out = Tensor(a.data.sum(axis=axes, keepdims=keepdims))

    def vjp(gs):
        g = gs[0]
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    record("sum", (a,), (out,), vjp)
    return out


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return scale(sum(a, axis=axes, keepdims=keepdims), 1.0 / count)


def _unary(name, fwd, dfdx):
    def op(a) -> Tensor:
        a = as_tensor(a)
        out = Tensor(fwd(a.data))
        record(name, (a,), (out,), lambda gs: (gs[0] * dfdx(a.data, out.data),))
        return out

    op.__name__ = name
    return op


square = _unary("square", np.square, lambda x, y: 2.0 * x)
# Subgradient of |x| at 0 is 0.
abs = _unary("abs", np.abs, lambda x, y: np.sign(x))  # noqa: A001
exp = _unary("exp", np.exp, lambda x, y: y)
sqrt = _unary("sqrt", np.sqrt, lambda x, y: 0.5 / y)
cos = _unary("cos", np.cos, lambda x, y: -np.sin(x))
sin = _unary("sin", np.sin, lambda x, y: np.cos(x))
relu = _unary("relu", lambda x: np.maximum(x, 0.0), lambda x, y: (x > 0).astype(np.float64))
sigmoid = _unary("sigmoid", lambda x: 0.5 * (1.0 + np.tanh(0.5 * x)), lambda x, y: y * (1.0 - y))


def leaky_relu(a, slope: float = 0.1) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    out = Tensor(np.where(pos, a.data, slope * a.data))
    record("leaky_relu", (a,), (out,), lambda gs: (np.where(pos, gs[0], slope * gs[0]),))
    return out


def clamp(a, lo: Optional[float] = None, hi: Optional[float] = None) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.clip(a.data, lo, hi))
    inside = np.ones(a.shape, dtype=bool)
    if lo is not None:
        inside &= a.data >= lo
    if hi is not None:
        inside &= a.data <= hi
    record("clamp", (a,), (out,), lambda gs: (gs[0] * inside,))
    return out


def softmax(a, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """Softmax along ``axis``; entries where ``mask`` is False get weight 0.

    Every slice along ``axis`` must keep at least one unmasked entry.
    """
    a = as_tensor(a)
    x = a.data
    if mask is not None:
        mask = np.broadcast_to(mask, x.shape)
        x = np.where(mask, x, -np.inf)
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def vjp(gs):
        g = gs[0]
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    record("softmax", (a,), (out,), vjp)
    return out


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    out = Tensor(data)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def vjp(gs):
        g = gs[0]
        parts = []
        for i in range(len(tensors)):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(bounds[i], bounds[i + 1])
            parts.append(g[tuple(idx)])
        return parts

    record("concat", tensors, (out,), vjp)
    return out


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    expanded = [reshape(t, t.shape[:axis % (t.ndim + 1)] + (1,) + t.shape[axis % (t.ndim + 1):]) for t in tensors]
    return concat(expanded, axis=axis)


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data[index])

    def vjp(gs):
        g = np.zeros_like(a.data)
        np.add.at(g, index, gs[0])
        return (g,)

    record("getitem", (a,), (out,), vjp)
    return out


def take(a, indices, axis: int) -> Tensor:
    """Gather along ``axis``; repeated indices accumulate gradient."""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.intp)
    out = Tensor(np.take(a.data, indices, axis=axis))

    def vjp(gs):
        g = np.zeros_like(a.data)
        moved = np.moveaxis(g, axis, 0)
        np.add.at(moved, indices, np.moveaxis(gs[0], axis, 0))
        return (g,)

    record("take", (a,), (out,), vjp)
    return out


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = Tensor(a.data.reshape(shape))
    except ValueError as exc:
        raise ShapeError(f"reshape: {exc}") from None
    record("reshape", (a,), (out,), lambda gs: (gs[0].reshape(a.shape),))
    return out


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.transpose(a.data, axes))
    inverse = None if axes is None else np.argsort(axes)
    record("transpose", (a,), (out,), lambda gs: (np.transpose(gs[0], inverse),))
    return out


def pad(a, pad_width) -> Tensor:
    """Zero padding with numpy's ``pad_width`` convention."""
    a = as_tensor(a)
    pad_width = [tuple(p) for p in pad_width]
    out = Tensor(np.pad(a.data, pad_width))
    index = tuple(slice(lo, lo + n) for (lo, _), n in zip(pad_width, a.shape))
    record("pad", (a,), (out,), lambda gs: (gs[0][index],))
    return out


def roll(a, shift, axis) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.roll(a.data, shift, axis=axis))
    neg_shift = tuple(-s for s in shift) if isinstance(shift, (tuple, list)) else -shift
    record("roll", (a,), (out,), lambda gs: (np.roll(gs[0], neg_shift, axis=axis),))
    return out


def where(cond: np.ndarray, a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(cond, dtype=bool)
    out = Tensor(np.where(cond, a.data, b.data))

    def vjp(gs):
        g = gs[0]
        return _unbroadcast(np.where(cond, g, 0.0), a.shape), _unbroadcast(np.where(cond, 0.0, g), b.shape)

    record("where", (a, b), (out,), vjp)
    return out
