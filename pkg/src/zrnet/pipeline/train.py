"""Two-phase training: pretrain the restorer and per-mode MLPs, then finetune with the graph."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional

import numpy as np

from ..autodiff import Tape, Tensor
from ..errors import ConfigError, ShapeError, TrainingDiverged
from ..losses import LAMBDA_FAA, LAMBDA_MSE, PHASES, FaaFlags, LossBreakdown, compute_losses
from ..model import ModelConfig, forward, init_params, topology_for
from .checkpoint import VERSION, load_checkpoint, save_checkpoint
from .optim import Adam

DEFAULT_ITERATIONS = {"pretrain": 2000, "finetune": 5000}
LOG_COLUMNS = ("iter", "l1", "mse", "faa_r", "faa_c", "faa_z", "total")


@dataclass(frozen=True)
class TrainConfig:
    phase: str = "pretrain"
    iterations: Optional[int] = None
    batch_size: int = 4
    learning_rate: float = 3e-4
    lr_decay: bool = False
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    lambda_mse: float = LAMBDA_MSE
    lambda_faa: float = LAMBDA_FAA
    faa: FaaFlags = field(default_factory=FaaFlags)
    init_checkpoint: Optional[str] = None
    log_every: int = 10

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ConfigError(f"phase must be one of {PHASES}, got {self.phase!r}")
        if self.iterations is None:
            object.__setattr__(self, "iterations", DEFAULT_ITERATIONS[self.phase])
        if self.iterations < 0 or self.batch_size < 1 or self.log_every < 1:
            raise ConfigError("iterations must be >= 0, batch_size and log_every >= 1")
        if self.phase == "finetune" and not self.init_checkpoint:
            raise ConfigError("finetune requires a pretrain checkpoint (init_checkpoint)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["model"] = ModelConfig.from_dict(d["model"])
        d["faa"] = FaaFlags(**d["faa"])
        return cls(**d)


class PhaseResult(NamedTuple):
    params: Dict[str, np.ndarray]
    log: List[dict]
    checkpoint: Optional[Path]


def training_step(batch, params: Dict[str, np.ndarray], optimizer: Adam, config: TrainConfig,
                  topology=None):
    """One forward/backward/update on ``batch = (stacks, gt_images, gt_coeffs)``.

    Returns ``(LossBreakdown, updated params)``; the input dict is not modified.
    """
    stacks, gts, coeffs = batch
    if len(stacks) == 0:
        raise ShapeError("training batch is empty")
    leaves = {k: Tensor(v, requires_grad=True, name=k) for k, v in params.items()}
    names = sorted(leaves)
    with Tape() as tape:
        restored, pred = forward(config.model, leaves, stacks, config.phase, topology)
        total, breakdown = compute_losses(restored, gts, pred, coeffs, config.model.optics, config.phase,
                                          config.faa, config.lambda_mse, config.lambda_faa)
        if not math.isfinite(breakdown.total):
            return breakdown, params
        grads = tape.backward(total, [leaves[k] for k in names])
    return breakdown, optimizer.step(params, dict(zip(names, grads)))


def _log_row(iteration: int, b: LossBreakdown) -> dict:
    return {"iter": iteration, "l1": b.l1_image, "mse": b.mse_coeffs, "faa_r": b.faa_r,
            "faa_c": b.faa_c, "faa_z": b.faa_z, "total": b.total}


def write_loss_log(path, rows: List[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
        for row in rows:
            writer.writerow([row["iter"]] + [repr(float(row[c])) for c in LOG_COLUMNS[1:]])


def read_loss_log(path) -> List[dict]:
    with open(path, newline="") as fh:
        return [{k: (int(v) if k == "iter" else float(v)) for k, v in row.items()}
                for row in csv.DictReader(fh)]


def initial_params(config: TrainConfig) -> Dict[str, np.ndarray]:
    if config.phase == "pretrain":
        return init_params(config.model, config.seed)
    ckpt = load_checkpoint(config.init_checkpoint, expected_hash=config.model.hash())
    return ckpt.params


def checkpoint_meta(config: TrainConfig, iteration: int) -> dict:
    return {
        "format_version": VERSION,
        "config": config.model.to_dict(),
        "config_hash": config.model.hash(),
        "phase": config.phase,
        "iteration": iteration,
        "seed": config.seed,
        "train": config.to_dict(),
    }


def run_phase(config: TrainConfig, data, out_dir=None, progress=None) -> PhaseResult:
    """Train one phase on ``data`` (anything with ``batch(rng, size)``).

    Writes ``<phase>.zrnk`` (+ JSON sidecar) and ``loss_<phase>.csv`` into
    ``out_dir`` when given.  A non-finite loss raises ``TrainingDiverged``.
    """
    params = initial_params(config)
    optimizer = Adam(config.learning_rate, decay_steps=config.iterations if config.lr_decay else 0)
    rng = np.random.default_rng([config.seed, 2])
    topology = topology_for(config.model.graph.grouping)
    log: List[dict] = []
    for it in range(1, config.iterations + 1):
        batch = data.batch(rng, config.batch_size)
        breakdown, params = training_step(batch, params, optimizer, config, topology)
        if not math.isfinite(breakdown.total):
            raise TrainingDiverged(it, breakdown.to_dict())
        if it % config.log_every == 0 or it == config.iterations:
            log.append(_log_row(it, breakdown))
            if progress is not None:
                progress(log[-1])
    ckpt_path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ckpt_path = save_checkpoint(out / f"{config.phase}.zrnk", params,
                                    checkpoint_meta(config, config.iterations))
        write_loss_log(out / f"loss_{config.phase}.csv", log)
    return PhaseResult(params, log, ckpt_path)


def finetune_config(pretrain: TrainConfig, checkpoint, **overrides) -> TrainConfig:
    """Finetune settings derived from a pretrain config."""
    fields = dict(phase="finetune", iterations=None, init_checkpoint=str(checkpoint))
    fields.update(overrides)
    return replace(pretrain, **fields)
