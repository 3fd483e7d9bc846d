"""Joint restorer + coefficient predictor and its configuration."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Tuple

import numpy as np

from . import zernike
from .autodiff import Tensor
from .errors import ConfigError
from .optics import OpticsConfig
from .restorer import RestorerConfig, init_restorer, restorer_forward
from .restorer import param_shapes as restorer_shapes
from .zgraph import GraphConfig, build_topology, direct_head, init_zgraph, zgraph_forward
from .zgraph import param_shapes as zgraph_shapes


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 64
    restorer: RestorerConfig = field(default_factory=RestorerConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    optics: OpticsConfig = field(default_factory=OpticsConfig)

    def __post_init__(self):
        n = self.image_size
        if n < self.optics.psf_k or n & (n - 1):
            raise ConfigError(f"image_size must be a power of two >= psf_k, got {n}")

    def to_dict(self) -> dict:
        return {
            "image_size": self.image_size,
            "restorer": self.restorer.to_dict(),
            "graph": self.graph.to_dict(),
            "optics": self.optics.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            image_size=int(d["image_size"]),
            restorer=RestorerConfig(**d["restorer"]),
            graph=GraphConfig(**d["graph"]),
            optics=OpticsConfig(**d["optics"]),
        )

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@lru_cache(maxsize=8)
def topology_for(grouping: str):
    return build_topology(zernike.grouping(grouping))


def param_shapes(config: ModelConfig) -> Dict[str, tuple]:
    shapes = dict(restorer_shapes(config.restorer))
    shapes.update(zgraph_shapes(config.restorer.latent_dim, config.graph.width))
    return shapes


def init_params(config: ModelConfig, seed: int) -> Dict[str, np.ndarray]:
    rng = np.random.default_rng([seed, 1])
    params = init_restorer(config.restorer, rng)
    params.update(init_zgraph(config.restorer.latent_dim, config.graph.width, rng))
    return params


def forward(config: ModelConfig, params: Dict[str, Tensor], stacks, phase: str,
            topology=None) -> Tuple[Tensor, Tensor]:
    """(restored (B, H, W), coefficients (B, 25)) for a (B, 3, H, W) batch.

    ``phase="pretrain"`` reads coefficients straight off the per-mode MLPs;
    ``"finetune"`` routes them through the graph.
    """
    out = restorer_forward(stacks, params, config.restorer)
    if phase == "pretrain":
        coeffs = direct_head(out.latent, params)
    else:
        coeffs = zgraph_forward(out.latent, params, topology or topology_for(config.graph.grouping))
    return out.restored, coeffs


def predict(config: ModelConfig, params: Dict[str, np.ndarray], stacks, phase: str):
    """Untracked forward pass returning numpy arrays."""
    tensors = {k: Tensor(v) for k, v in params.items()}
    restored, coeffs = forward(config, tensors, np.asarray(stacks, dtype=np.float64), phase)
    return restored.data, coeffs.data
