import numpy as np
import pytest

from zrnet.autodiff import Tape, Tensor, ops
from zrnet.errors import ConfigError, ShapeError
from zrnet.restorer import RestorerConfig, count_params, init_restorer, param_shapes, restorer_forward


def tensors(params, grad=False):
    return {k: Tensor(v, requires_grad=grad) for k, v in params.items()}


@pytest.mark.parametrize("cfg", [RestorerConfig(), RestorerConfig(levels=2, base_channels=4, latent_dim=8),
                                 RestorerConfig(levels=4, base_channels=8, latent_dim=16)])
def test_param_count_closed_form(cfg):
    params = init_restorer(cfg, np.random.default_rng(0))
    assert sum(p.size for p in params.values()) == count_params(cfg)
    assert set(params) == set(param_shapes(cfg))


@pytest.mark.parametrize("size", [16, 32, 64])
def test_output_shapes(size, rng):
    cfg = RestorerConfig(levels=3, base_channels=4, latent_dim=12)
    out = restorer_forward(rng.random((2, 3, size, size)), tensors(init_restorer(cfg, rng)), cfg)
    assert out.restored.shape == (2, size, size)
    assert out.latent.shape == (2, 12)


def test_single_stack_gets_batch_axis(rng):
    cfg = RestorerConfig(levels=2, base_channels=4, latent_dim=4)
    out = restorer_forward(rng.random((3, 8, 8)), tensors(init_restorer(cfg, rng)), cfg)
    assert out.restored.shape == (1, 8, 8)


@pytest.mark.parametrize("shape", [(1, 2, 16, 16), (1, 3, 18, 16), (3, 16, 16, 1)])
def test_shape_errors(shape):
    cfg = RestorerConfig()
    with pytest.raises(ShapeError):
        restorer_forward(np.zeros(shape), tensors(init_restorer(cfg, np.random.default_rng(0))), cfg)


def test_config_validation():
    with pytest.raises(ConfigError):
        RestorerConfig(levels=1)
    with pytest.raises(ConfigError):
        RestorerConfig(latent_dim=0)


def test_samples_are_independent(rng):
    cfg = RestorerConfig(levels=2, base_channels=4, latent_dim=4)
    params = tensors(init_restorer(cfg, rng))
    x = rng.random((2, 3, 16, 16))
    both = restorer_forward(x, params, cfg)
    one = restorer_forward(x[1:], params, cfg)
    np.testing.assert_allclose(both.restored.data[1], one.restored.data[0], atol=1e-12)
    np.testing.assert_allclose(both.latent.data[1], one.latent.data[0], atol=1e-12)


def test_every_parameter_receives_gradient(rng):
    cfg = RestorerConfig(levels=3, base_channels=4, latent_dim=6)
    params = tensors(init_restorer(cfg, rng), grad=True)
    with Tape() as tape:
        out = restorer_forward(rng.random((2, 3, 16, 16)), params, cfg)
        loss = ops.sum(ops.square(out.restored)) + ops.sum(ops.square(out.latent))
    names = sorted(params)
    grads = tape.backward(loss, [params[k] for k in names])
    for name, g in zip(names, grads):
        assert np.any(g != 0), name


def test_init_is_seeded():
    a = init_restorer(RestorerConfig(), np.random.default_rng(5))
    b = init_restorer(RestorerConfig(), np.random.default_rng(5))
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])
    assert np.all(a["restorer.enc1.b"] == 0)
