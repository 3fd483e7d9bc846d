import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from zrnet.autodiff import (ComplexTensor, Tape, Tensor, abs2, backward, cexp, conv2d, fft2, grad_check,
                            ifft2, linear, ops, upsample_nearest)
from zrnet.errors import ConfigError, ShapeError, TapeError

TOL = 1e-6


def away_from_zero(rng, shape, margin=0.1):
    x = rng.uniform(-2, 2, size=shape)
    return np.where(np.abs(x) < margin, x + np.sign(x + 1e-12) * margin, x)


UNARY = {
    "square": ops.square,
    "abs": ops.abs,
    "exp": ops.exp,
    "sqrt": lambda t: ops.sqrt(ops.abs(t) + 0.5),
    "cos": ops.cos,
    "sin": ops.sin,
    "relu": ops.relu,
    "sigmoid": ops.sigmoid,
    "leaky_relu": lambda t: ops.leaky_relu(t, 0.2),
    "clamp": lambda t: ops.clamp(t, -1.0, 1.0),
    "neg": ops.neg,
    "scale": lambda t: ops.scale(t, -2.5),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradients(name, rng):
    x = away_from_zero(rng, (3, 4))
    x = np.where(np.abs(np.abs(x) - 1.0) < 0.05, x * 0.9, x)  # keep clear of clamp kinks
    w = rng.normal(size=(3, 4))
    assert grad_check(lambda t: ops.sum(UNARY[name](t) * Tensor(w)), x) < TOL


BINARY = {
    "add": ops.add,
    "sub": ops.sub,
    "mul": ops.mul,
    "div": lambda a, b: ops.div(a, ops.exp(b)),
}


@pytest.mark.parametrize("name", sorted(BINARY))
@pytest.mark.parametrize("shapes", [((3, 4), (3, 4)), ((3, 4), (4,)), ((2, 1, 4), (3, 1)), ((3, 4), ())])
def test_binary_gradients_with_broadcasting(name, shapes, rng):
    a, b = rng.normal(size=shapes[0]), rng.normal(size=shapes[1])
    f = BINARY[name]
    assert grad_check(lambda t: ops.sum(ops.square(f(t, Tensor(b)))), a) < TOL
    assert grad_check(lambda t: ops.sum(ops.square(f(Tensor(a), t))), b) < TOL


def test_broadcast_mismatch():
    with pytest.raises(ShapeError):
        ops.add(Tensor(np.zeros(3)), Tensor(np.zeros(4)))


@pytest.mark.parametrize("sa,sb", [((3, 4), (4, 5)), ((2, 3, 4), (4, 2)), ((2, 3, 4), (2, 4, 5))])
def test_matmul(sa, sb, rng):
    a, b = rng.normal(size=sa), rng.normal(size=sb)
    np.testing.assert_allclose(ops.matmul(Tensor(a), Tensor(b)).data, a @ b)
    assert grad_check(lambda t: ops.sum(ops.square(ops.matmul(t, Tensor(b)))), a) < TOL
    assert grad_check(lambda t: ops.sum(ops.square(ops.matmul(Tensor(a), t))), b) < TOL


@pytest.mark.parametrize("spec,sa,sb", [
    ("bl,nld->bnd", (2, 3), (4, 3, 5)),
    ("bnd,nd->bn", (2, 4, 5), (4, 5)),
    ("gn,bnd->bgd", (3, 4), (2, 4, 5)),
    ("...j,jxy->...xy", (2, 3), (3, 4, 4)),
])
def test_einsum(spec, sa, sb, rng):
    a, b = rng.normal(size=sa), rng.normal(size=sb)
    np.testing.assert_allclose(ops.einsum(spec, Tensor(a), Tensor(b)).data, np.einsum(spec, a, b))
    assert grad_check(lambda t: ops.sum(ops.square(ops.einsum(spec, t, Tensor(b)))), a) < TOL
    assert grad_check(lambda t: ops.sum(ops.square(ops.einsum(spec, Tensor(a), t))), b) < TOL


@pytest.mark.parametrize("axis,keepdims", [(None, False), (0, False), (1, True), ((0, 2), False)])
def test_reductions(axis, keepdims, rng):
    x = rng.normal(size=(2, 3, 4))
    np.testing.assert_allclose(ops.sum(Tensor(x), axis, keepdims).data, np.sum(x, axis=axis, keepdims=keepdims))
    np.testing.assert_allclose(ops.mean(Tensor(x), axis, keepdims).data, np.mean(x, axis=axis, keepdims=keepdims))
    assert grad_check(lambda t: ops.sum(ops.square(ops.mean(t, axis, keepdims))), x) < TOL


SHAPE_OPS = {
    "reshape": lambda t: ops.reshape(t, (4, 6)),
    "transpose": lambda t: ops.transpose(t, (2, 0, 1)),
    "getitem": lambda t: t[1:, ::2, [0, 0, 3]],
    "take": lambda t: ops.take(t, [2, 0, 2], axis=1),
    "pad": lambda t: ops.pad(t, [(0, 0), (1, 2), (0, 1)]),
    "roll": lambda t: ops.roll(t, (1, -2), axis=(1, 2)),
    "concat": lambda t: ops.concat([t, ops.square(t)], axis=2),
    "stack": lambda t: ops.stack([t, ops.sin(t)], axis=0),
    "where": lambda t: ops.where(np.arange(24).reshape(2, 3, 4) % 3 == 0, t, ops.square(t)),
}


@pytest.mark.parametrize("name", sorted(SHAPE_OPS))
def test_shape_op_gradients(name, rng):
    x = rng.normal(size=(2, 3, 4))
    out_shape = SHAPE_OPS[name](Tensor(x)).shape
    w = rng.normal(size=out_shape)
    assert grad_check(lambda t: ops.sum(SHAPE_OPS[name](t) * Tensor(w)), x) < TOL


def test_softmax_rows_and_mask(rng):
    x = rng.normal(size=(2, 3, 5))
    mask = rng.random((3, 5)) > 0.4
    mask[:, 0] = True
    p = ops.softmax(Tensor(x), axis=-1, mask=mask).data
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(p[:, ~mask] == 0.0)
    w = rng.normal(size=x.shape)
    assert grad_check(lambda t: ops.sum(ops.softmax(t, -1, mask) * Tensor(w)), x) < TOL


def test_softmax_is_shift_invariant_and_stable():
    x = np.array([[1000.0, 1001.0, 1002.0]])
    p = ops.softmax(Tensor(x)).data
    np.testing.assert_allclose(p, ops.softmax(Tensor(x - 1000.0)).data)
    assert np.all(np.isfinite(p))


@pytest.mark.parametrize("stride,padding,k", [(1, 1, 3), (2, 1, 3), (1, 0, 3), (1, 2, 5)])
def test_conv2d_against_loops(stride, padding, k, rng):
    x, w, b = rng.normal(size=(2, 3, 8, 8)), rng.normal(size=(4, 3, k, k)), rng.normal(size=4)
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (8 + 2 * padding - k) // stride + 1
    ref = np.zeros((2, 4, ho, ho))
    for i in range(ho):
        for j in range(ho):
            win = xp[:, :, i * stride:i * stride + k, j * stride:j * stride + k]
            ref[:, :, i, j] = np.einsum("bcxy,ocxy->bo", win, w) + b
    np.testing.assert_allclose(conv2d(Tensor(x), Tensor(w), Tensor(b), stride, padding).data, ref, atol=1e-12)
    for which in range(3):
        args = [x, w, b]

        def f(t):
            a = [Tensor(v) for v in args]
            a[which] = t
            return ops.sum(ops.square(conv2d(a[0], a[1], a[2], stride, padding)))

        assert grad_check(f, args[which]) < 1e-5


def test_conv2d_shape_errors():
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.zeros((1, 2, 8, 8))), Tensor(np.zeros((4, 3, 3, 3))))
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.zeros((1, 3, 2, 2))), Tensor(np.zeros((4, 3, 3, 3))))


def test_upsample_and_linear(rng):
    x = rng.normal(size=(2, 3, 4, 4))
    up = upsample_nearest(Tensor(x), 2).data
    np.testing.assert_array_equal(up, x.repeat(2, axis=2).repeat(2, axis=3))
    assert grad_check(lambda t: ops.sum(ops.square(upsample_nearest(t, 2))), x) < TOL
    w, b = rng.normal(size=(5, 3)), rng.normal(size=5)
    v = rng.normal(size=(2, 3))
    np.testing.assert_allclose(linear(Tensor(v), Tensor(w), Tensor(b)).data, v @ w.T + b)
    assert grad_check(lambda t: ops.sum(ops.square(linear(Tensor(v), t, Tensor(b)))), w) < TOL


@pytest.mark.parametrize("shape", [(4, 4), (2, 8, 4), (1, 16, 16)])
def test_fft_matches_numpy(shape, rng):
    re, im = rng.normal(size=shape), rng.normal(size=shape)
    z = ComplexTensor(Tensor(re), Tensor(im))
    np.testing.assert_allclose(fft2(z).numpy(), np.fft.fft2(re + 1j * im), atol=1e-12)
    np.testing.assert_allclose(ifft2(fft2(z)).numpy(), re + 1j * im, atol=1e-12)


@pytest.mark.parametrize("transform", [fft2, ifft2])
def test_fft_gradients(transform, rng):
    x = rng.normal(size=(8, 4))
    wr, wi = rng.normal(size=(8, 4)), rng.normal(size=(8, 4))

    def f(t):
        y = transform(ComplexTensor(t, ops.sin(t)))
        return ops.sum(y.re * Tensor(wr)) + ops.sum(ops.square(y.im) * Tensor(wi))

    assert grad_check(f, x) < TOL


def test_fft_adjoint_identity(rng):
    """<F x, y> == <x, F^H y> for the unnormalized DFT."""
    x = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    y = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    lhs = np.vdot(y, fft2(ComplexTensor.from_numpy(x)).numpy())
    rhs = np.vdot(np.fft.ifft2(y) * 64, x)
    assert lhs == pytest.approx(rhs)


@pytest.mark.parametrize("shape", [(6, 8), (8, 12), (8,)])
def test_fft_rejects_bad_sizes(shape):
    with pytest.raises((ConfigError, ShapeError)):
        fft2(Tensor(np.zeros(shape)))


def test_cexp_abs2_unit_modulus(rng):
    phase = rng.normal(size=(4, 4))
    np.testing.assert_allclose(abs2(cexp(Tensor(phase))).data, 1.0, atol=1e-15)


@given(arrays(np.float64, (3, 3), elements=st.floats(-3, 3)), arrays(np.float64, (3, 3), elements=st.floats(-3, 3)))
def test_product_rule(a, b):
    ta, tb = Tensor(a, requires_grad=True), Tensor(b, requires_grad=True)
    with Tape() as tape:
        loss = ops.sum(ta * tb)
    ga, gb = tape.backward(loss, [ta, tb])
    np.testing.assert_array_equal(ga, b)
    np.testing.assert_array_equal(gb, a)


def test_gradients_accumulate_over_fanout():
    x = Tensor(np.array(3.0), requires_grad=True)
    with Tape() as tape:
        y = x * x + x * 2.0
    tape.backward(y)
    assert x.grad == pytest.approx(8.0)


def test_disconnected_leaf_gets_zero():
    x = Tensor(np.ones(3), requires_grad=True)
    z = Tensor(np.ones(2), requires_grad=True)
    with Tape() as tape:
        loss = ops.sum(x)
    gx, gz = tape.backward(loss, [x, z])
    np.testing.assert_array_equal(gz, np.zeros(2))
    np.testing.assert_array_equal(gx, np.ones(3))


def test_module_backward_uses_recording_tape():
    x = Tensor(np.arange(3.0), requires_grad=True)
    with Tape():
        loss = ops.sum(ops.square(x))
    (g,) = backward(loss, [x])
    np.testing.assert_array_equal(g, 2 * np.arange(3.0))


def test_non_scalar_loss_rejected():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = x * 2.0
    with pytest.raises(TapeError):
        tape.backward(y)


def test_double_backward_rejected_until_reset():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        loss = ops.sum(x)
    tape.backward(loss)
    with pytest.raises(TapeError):
        tape.backward(loss)
    tape.reset()
    assert tape.nodes == []


def test_no_tape_means_no_graph():
    x = Tensor(np.ones(3), requires_grad=True)
    y = ops.sum(x * 2.0)
    assert y.node is None


def test_detach_stops_gradient():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        loss = ops.sum(x * x.detach())
    (g,) = tape.backward(loss, [x])
    np.testing.assert_array_equal(g, np.ones(3))


def test_nested_tapes_record_innermost():
    x = Tensor(np.ones(2), requires_grad=True)
    with Tape() as outer:
        with Tape() as inner:
            ops.sum(ops.square(x))
    assert inner.nodes and not outer.nodes


def test_backward_releases_graph():
    import weakref
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        hidden = ops.exp(x)
        loss = ops.sum(hidden)
    ref = weakref.ref(hidden)
    del hidden
    tape.backward(loss)
    assert ref() is None  # freed by refcounting, no gc pass needed
    with pytest.raises(TapeError):
        backward(loss)
