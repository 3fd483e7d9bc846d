"""Checkpoint evaluation: per-sample restoration and wavefront metrics."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, NamedTuple, Optional

import numpy as np

from .. import metrics
from ..errors import CheckpointError
from ..metrics import MetricsReport
from ..model import ModelConfig, predict
from .checkpoint import Checkpoint, load_checkpoint
from .data import Dataset

CSV_COLUMNS = ("id", "psnr", "ssim", "rms_wfe_pre", "rms_wfe_post")
CHUNK = 8  # fixed so results never depend on the thread count
SUMMARY_ID = "all"


class Evaluation(NamedTuple):
    report: MetricsReport
    rows: List[dict]
    restored: np.ndarray
    coeffs: np.ndarray


def score(dataset: Dataset, restored, coeffs) -> Evaluation:
    """Metrics of given restorations / coefficient predictions against ``dataset``.

    Per-sample rows carry single-sample wavefront errors; the report pools
    squared errors over the whole set per mode before the square root.
    """
    _, gts, gt_coeffs = dataset.arrays()
    restored = np.asarray(restored, dtype=np.float64)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    zeros = np.zeros_like(gt_coeffs)
    rows = []
    for i, s in enumerate(dataset.samples):
        img = metrics.clamp_unit(restored[i])
        rows.append({
            "id": s.id,
            "psnr": metrics.psnr(img, gts[i]),
            "ssim": metrics.ssim(img, gts[i]),
            "rms_wfe_pre": metrics.rms_wfe(zeros[i], gt_coeffs[i]),
            "rms_wfe_post": metrics.rms_wfe(coeffs[i], gt_coeffs[i]),
        })
    report = MetricsReport(
        psnr=float(np.mean([r["psnr"] for r in rows])),
        ssim=float(np.mean([r["ssim"] for r in rows])),
        rms_wfe_pre=metrics.rms_wfe(zeros, gt_coeffs),
        rms_wfe_post=metrics.rms_wfe(coeffs, gt_coeffs),
        n_samples=len(rows),
    )
    return Evaluation(report, rows, restored, coeffs)


def check_compatible(ckpt: Checkpoint, dataset: Dataset) -> ModelConfig:
    if "config" not in ckpt.meta:
        raise CheckpointError("checkpoint has no config sidecar")
    config = ModelConfig.from_dict(ckpt.meta["config"])
    if ckpt.config_hash != config.hash():
        raise CheckpointError(f"checkpoint sidecar hash {ckpt.config_hash} does not match its config "
                              f"({config.hash()})")
    if config.optics != dataset.optics or config.image_size != dataset.image_size:
        raise CheckpointError("checkpoint optics/image size differ from the dataset's "
                              f"(checkpoint {config.optics.to_dict()} @ {config.image_size}, dataset "
                              f"{dataset.optics.to_dict()} @ {dataset.image_size})")
    return config


def run_model(config: ModelConfig, params, phase: str, dataset: Dataset, threads: int = 1):
    stacks, _, _ = dataset.arrays()
    chunks = [stacks[i:i + CHUNK] for i in range(0, len(stacks), CHUNK)]

    def run(chunk):
        return predict(config, params, chunk, phase)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            outs = list(pool.map(run, chunks))
    else:
        outs = [run(c) for c in chunks]
    return np.concatenate([o[0] for o in outs]), np.concatenate([o[1] for o in outs])


def evaluate(checkpoint, dataset: Dataset, threads: int = 1, expected_hash: Optional[str] = None) -> Evaluation:
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint, expected_hash)
    config = check_compatible(ckpt, dataset)
    restored, coeffs = run_model(config, ckpt.params, ckpt.meta.get("phase", "finetune"), dataset, threads)
    return score(dataset, restored, coeffs)


def write_report(evaluation: Evaluation, out_dir) -> tuple:
    """Write ``metrics.csv`` (per sample + pooled summary row) and ``metrics.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep = evaluation.report
    summary = {"id": SUMMARY_ID, "psnr": rep.psnr, "ssim": rep.ssim,
               "rms_wfe_pre": rep.rms_wfe_pre, "rms_wfe_post": rep.rms_wfe_post}
    csv_path = out / "metrics.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in evaluation.rows + [summary]:
            writer.writerow([row["id"]] + [repr(float(row[c])) for c in CSV_COLUMNS[1:]])
    json_path = out / "metrics.json"
    json_path.write_text(json.dumps({"summary": rep.to_dict(), "samples": evaluation.rows}, indent=1))
    return csv_path, json_path
