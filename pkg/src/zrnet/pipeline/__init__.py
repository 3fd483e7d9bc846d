"""Data synthesis, training, checkpointing and evaluation."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import (Dataset, FixedBatches, ProceduralSource, Sample, read_png16, regenerate_stack,
                   synth_dataset, synth_sample, write_png16)
from .evaluate import Evaluation, evaluate, score, write_report
from .optim import Adam
from .train import PhaseResult, TrainConfig, finetune_config, read_loss_log, run_phase, training_step

__all__ = [
    "Adam", "Checkpoint", "Dataset", "Evaluation", "FixedBatches", "PhaseResult", "ProceduralSource",
    "Sample", "TrainConfig", "evaluate", "finetune_config", "load_checkpoint", "read_loss_log",
    "read_png16", "regenerate_stack", "run_phase", "save_checkpoint", "score", "synth_dataset",
    "synth_sample", "training_step", "write_png16", "write_report",
]
