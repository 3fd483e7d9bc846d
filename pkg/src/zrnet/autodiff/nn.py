"""Convolution and resampling primitives for NCHW tensors."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, as_tensor, record


def conv2d(x, w, b=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x`` (B,Cin,H,W) with ``w`` (Cout,Cin,kh,kw).

    Both lowerings work on a channel-major copy of the padded input and
    return a (B,Cout,Ho,Wo) view of a channel-major result.
    """
    x, w = as_tensor(x), as_tensor(w)
    b = None if b is None else as_tensor(b)
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: input {x.shape} incompatible with weight {w.shape}")
    _, _, h, wd = x.shape
    _, _, kh, kw = w.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: input {x.shape} too small for kernel {w.shape}")
    xc = np.pad(x.data.transpose(1, 0, 2, 3), ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    lower = _conv_shifted if stride == 1 else _conv_im2col
    out, grad_x, grad_w = lower(xc, w.data, stride, ho, wo, x.requires_grad, w.requires_grad)
    if b is not None:
        out += b.data[:, None, None, None]
    result = Tensor(out.transpose(1, 0, 2, 3))

    def vjp(gs):
        gc = np.ascontiguousarray(gs[0].transpose(1, 0, 2, 3))
        gx = None
        if x.requires_grad:
            gxc = grad_x(gc)
            gx = gxc[:, :, padding:padding + h, padding:padding + wd].transpose(1, 0, 2, 3)
        gw = grad_w(gc) if w.requires_grad else None
        if b is None:
            return gx, gw
        return gx, gw, (gc.sum(axis=(1, 2, 3)) if b.requires_grad else None)

    parents = (x, w) if b is None else (x, w, b)
    record("conv2d", parents, (result,), vjp)
    return result


def _conv_shifted(xc, w, stride, ho, wo, need_gx, need_gw):
    """Stride-1 conv on the flattened padded image.

    In the flat (C, B*Hp*Wp) layout every kernel tap is a constant column
    offset, so the taps are stacked on the output side of one GEMM and summed
    with shifted adds; border positions of the padded grid are discarded.
    """
    cin, bsz, hp, wp = xc.shape
    cout, _, kh, kw = w.shape
    taps = kh * kw
    offsets = [i * wp + j for i in range(kh) for j in range(kw)]
    total = bsz * hp * wp
    span = total - offsets[-1]
    flat = xc.reshape(cin, total)
    w_taps = w.transpose(2, 3, 0, 1).reshape(taps * cout, cin)
    stacked = (w_taps @ flat).reshape(taps, cout, total)
    out = np.zeros((cout, total))
    for t, off in enumerate(offsets):
        out[:, :span] += stacked[t, :, off:off + span]
    out = out.reshape(cout, bsz, hp, wp)[:, :, :ho, :wo]

    def shifted_grads(gc):
        g = np.zeros((cout, bsz, hp, wp))
        g[:, :, :ho, :wo] = gc
        g = g.reshape(cout, total)[:, :span]
        shifted = np.zeros((taps, cout, total))
        for t, off in enumerate(offsets):
            shifted[t, :, off:off + span] = g
        return shifted.reshape(taps * cout, total)

    cache = {}

    def get_shifted(gc):
        if "s" not in cache:
            cache["s"] = shifted_grads(gc)
        return cache["s"]

    def grad_x(gc):
        w_in = w.transpose(1, 2, 3, 0).reshape(cin, taps * cout)
        return (w_in @ get_shifted(gc)).reshape(cin, bsz, hp, wp)

    def grad_w(gc):
        gw = get_shifted(gc) @ flat.T
        return gw.reshape(kh, kw, cout, cin).transpose(2, 3, 0, 1)

    return np.ascontiguousarray(out), grad_x, grad_w


def _conv_im2col(xc, w, stride, ho, wo, need_gx, need_gw):
    cin, bsz, _, _ = xc.shape
    cout, _, kh, kw = w.shape

    def window(i, j):
        return (slice(None), slice(None), slice(i, i + stride * (ho - 1) + 1, stride),
                slice(j, j + stride * (wo - 1) + 1, stride))

    cols = np.empty((cin, kh, kw, bsz, ho, wo))
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xc[window(i, j)]
    cols = cols.reshape(cin * kh * kw, bsz * ho * wo)
    w2 = w.reshape(cout, -1)
    out = (w2 @ cols).reshape(cout, bsz, ho, wo)

    def grad_x(gc):
        gcols = (w2.T @ gc.reshape(cout, -1)).reshape(cin, kh, kw, bsz, ho, wo)
        gxc = np.zeros(xc.shape)
        for i in range(kh):
            for j in range(kw):
                gxc[window(i, j)] += gcols[:, i, j]
        return gxc

    def grad_w(gc):
        return (gc.reshape(cout, -1) @ cols.T).reshape(w.shape)

    return out, grad_x, grad_w


def upsample_nearest(x, factor: int = 2) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"upsample_nearest expects NCHW, got {x.shape}")
    out = Tensor(x.data.repeat(factor, axis=2).repeat(factor, axis=3))
    bsz, c, h, w = x.shape

    def vjp(gs):
        return (gs[0].reshape(bsz, c, h, factor, w, factor).sum(axis=(3, 5)),)

    record("upsample_nearest", (x,), (out,), vjp)
    return out


def linear(x, w, b: Optional[Tensor] = None) -> Tensor:
    """``x @ w.T + b`` for x of shape (..., in) and w of shape (out, in)."""
    from . import ops

    y = ops.matmul(x, ops.transpose(as_tensor(w)))
    return y if b is None else y + b
