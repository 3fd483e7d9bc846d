"""Compact U-Net restorer that also emits a pooled latent vector.

Encoder: a stride-1 stem, then stride-2 3x3 convs that double the channel
count per level.  Decoder: nearest upsample, concat with the matching encoder
feature, 3x3 conv.  The latent is a linear map of the globally averaged
bottleneck.  Leaky-ReLU (slope 0.1) everywhere except the output head and
the latent projection, which are linear.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, NamedTuple

import numpy as np

from .autodiff import Tensor, conv2d, linear, ops, upsample_nearest
from .errors import ConfigError, ShapeError

SLOPE = 0.1
IN_CHANNELS = 3


@dataclass(frozen=True)
class RestorerConfig:
    levels: int = 3
    base_channels: int = 16
    latent_dim: int = 64

    def __post_init__(self):
        if self.levels < 2:
            raise ConfigError(f"levels must be >= 2, got {self.levels}")
        if self.base_channels <= 0 or self.latent_dim <= 0:
            raise ConfigError("channel counts must be positive")

    def channels(self, level: int) -> int:
        return self.base_channels * 2**level

    def to_dict(self) -> dict:
        return asdict(self)


class RestorerOutput(NamedTuple):
    restored: Tensor  # (B, H, W)
    latent: Tensor  # (B, latent_dim)


def _he_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def param_shapes(config: RestorerConfig) -> Dict[str, tuple]:
    shapes = {}
    c = config.channels
    shapes["restorer.enc0.w"] = (c(0), IN_CHANNELS, 3, 3)
    shapes["restorer.enc0.b"] = (c(0),)
    for k in range(1, config.levels):
        shapes[f"restorer.enc{k}.w"] = (c(k), c(k - 1), 3, 3)
        shapes[f"restorer.enc{k}.b"] = (c(k),)
    top = config.levels - 1
    shapes["restorer.latent.w"] = (config.latent_dim, c(top))
    shapes["restorer.latent.b"] = (config.latent_dim,)
    for k in range(top, 0, -1):
        shapes[f"restorer.dec{k}.w"] = (c(k - 1), c(k) + c(k - 1), 3, 3)
        shapes[f"restorer.dec{k}.b"] = (c(k - 1),)
    shapes["restorer.head.w"] = (1, c(0), 3, 3)
    shapes["restorer.head.b"] = (1,)
    return shapes


def init_restorer(config: RestorerConfig, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    params = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            params[name] = _he_uniform(rng, shape, fan_in)
    return params


def count_params(config: RestorerConfig) -> int:
    """Closed-form parameter count of the architecture."""
    c = config.channels
    total = 9 * IN_CHANNELS * c(0) + c(0)
    for k in range(1, config.levels):
        total += 9 * c(k - 1) * c(k) + c(k)  # encoder
        total += 9 * (c(k) + c(k - 1)) * c(k - 1) + c(k - 1)  # decoder
    total += c(config.levels - 1) * config.latent_dim + config.latent_dim
    total += 9 * c(0) + 1
    return total


def restorer_forward(stack, params: Dict[str, Tensor], config: RestorerConfig) -> RestorerOutput:
    """Restore a (B, 3, H, W) phase-diverse batch."""
    x = stack if isinstance(stack, Tensor) else Tensor(stack)
    if x.ndim == 3:
        x = ops.reshape(x, (1,) + x.shape)
    if x.ndim != 4 or x.shape[1] != IN_CHANNELS:
        raise ShapeError(f"restorer expects (B, 3, H, W), got {x.shape}")
    factor = 2 ** (config.levels - 1)
    if x.shape[2] % factor or x.shape[3] % factor:
        raise ShapeError(f"spatial dims {x.shape[2:]} must be divisible by {factor}")

    p = params
    skips = [ops.leaky_relu(conv2d(x, p["restorer.enc0.w"], p["restorer.enc0.b"], padding=1), SLOPE)]
    for k in range(1, config.levels):
        h = conv2d(skips[-1], p[f"restorer.enc{k}.w"], p[f"restorer.enc{k}.b"], stride=2, padding=1)
        skips.append(ops.leaky_relu(h, SLOPE))

    bottleneck = skips[-1]
    pooled = ops.mean(bottleneck, axis=(2, 3))
    latent = linear(pooled, p["restorer.latent.w"], p["restorer.latent.b"])

    d = bottleneck
    for k in range(config.levels - 1, 0, -1):
        merged = ops.concat([upsample_nearest(d, 2), skips[k - 1]], axis=1)
        d = ops.leaky_relu(conv2d(merged, p[f"restorer.dec{k}.w"], p[f"restorer.dec{k}.b"], padding=1), SLOPE)
    out = conv2d(d, p["restorer.head.w"], p["restorer.head.b"], padding=1)
    restored = ops.reshape(out, (out.shape[0],) + out.shape[2:])
    return RestorerOutput(restored, latent)
