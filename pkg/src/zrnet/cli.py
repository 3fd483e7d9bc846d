"""Command-line entry point: ``zrnet {synth,train,eval,predict,psf,groups}``.

Every subcommand prints its resolved configuration and the configuration
hash to stderr before doing any work; machine-readable results go to stdout
or to files under ``--out``.  Values from ``--config FILE.json`` fill in
anything not given on the command line.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import secrets
import sys
import traceback
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import zernike
from .errors import ConfigError, ZRNetError
from .losses import LAMBDA_FAA, LAMBDA_MSE, FaaFlags
from .model import ModelConfig, predict
from .optics import OpticsConfig, psf_from_coeffs
from .pipeline import (Dataset, FixedBatches, ProceduralSource, TrainConfig, evaluate, load_checkpoint,
                       read_png16, run_phase, synth_dataset, write_png16, write_report)
from .pipeline.data import image_folder
from .pipeline.evaluate import check_compatible
from .restorer import RestorerConfig
from .zgraph import GraphConfig

DEFAULTS = {
    "image_size": 64,
    "pupil_n": 128,
    "psf_k": 33,
    "grouping": "azimuthal",
    "faa_r": True,
    "faa_c": True,
    "faa_z": True,
    "lambda1": LAMBDA_MSE,
    "lambda2": LAMBDA_FAA,
    "batch": 4,
    "lr": 3e-4,
    "lr_decay": False,
    "log_every": 10,
    "n": 64,
    "out": ".",
    "threads": None,
}


class UsageError(Exception):
    pass


def _common_optics(p: argparse.ArgumentParser) -> None:
    p.add_argument("--image-size", type=int)
    p.add_argument("--pupil-n", type=int)
    p.add_argument("--psf-k", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zrnet", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file of flag values (command-line flags win)")
    parser.add_argument("--threads", type=int, help="worker threads for synthesis/evaluation "
                        "(falls back to $ZRNET_THREADS; training is always single-threaded)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize a dataset and its manifest")
    _common_optics(p)
    p.add_argument("--n", type=int, help="number of samples")
    p.add_argument("--seed", type=int)
    p.add_argument("--source-dir", help="folder of grayscale images to use instead of procedural blobs")
    p.add_argument("--out")

    p = sub.add_parser("train", help="run one training phase")
    p.add_argument("--phase", choices=("pretrain", "finetune"), required=True)
    p.add_argument("--data", help="dataset directory; omit to draw fresh procedural samples")
    _common_optics(p)
    p.add_argument("--grouping", choices=zernike.GROUPING_MODES)
    for term in "rcz":
        p.add_argument(f"--faa-{term}", action=argparse.BooleanOptionalAction, dest=f"faa_{term}")
    p.add_argument("--lambda1", type=float, help="weight of the coefficient MSE")
    p.add_argument("--lambda2", type=float, help="weight of the Fourier alignment loss")
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lr-decay", action=argparse.BooleanOptionalAction, dest="lr_decay")
    p.add_argument("--log-every", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--init-checkpoint")
    p.add_argument("--out")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")

    p = sub.add_parser("predict", help="restore one phase-diverse stack")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--stack", nargs=3, metavar=("MINUS", "FOCUS", "PLUS"), help="three 16-bit PNGs")
    p.add_argument("--data", help="dataset directory (use with --id)")
    p.add_argument("--id", help="sample id inside --data")
    p.add_argument("--out")

    p = sub.add_parser("psf", help="render a PSF kernel from a coefficient JSON")
    p.add_argument("--coeffs", required=True, help="JSON list of 25 values or {ansi index: value}")
    p.add_argument("--pupil-n", type=int)
    p.add_argument("--psf-k", type=int)
    p.add_argument("--out")

    p = sub.add_parser("groups", help="print a grouping table as JSON")
    p.add_argument("--grouping", choices=zernike.GROUPING_MODES)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge command-line flags over the optional JSON config over built-in defaults."""
    file_values = {}
    if args.config:
        try:
            file_values = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read --config {args.config}: {exc}") from exc
        if not isinstance(file_values, dict):
            raise ConfigError("--config must hold a JSON object")
    resolved = {}
    for key, value in vars(args).items():
        if key == "config":
            continue
        if value is None:
            value = file_values.get(key, DEFAULTS.get(key))
        resolved[key] = value
    if resolved.get("threads") is None:
        resolved["threads"] = int(os.environ.get("ZRNET_THREADS", "1"))
    if "seed" in resolved and resolved["seed"] is None:
        resolved["seed"] = secrets.randbelow(2**31)
        print(f"no --seed given; using random seed {resolved['seed']}", file=sys.stderr)
    return resolved


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def announce(cfg: dict) -> None:
    print("resolved config: " + json.dumps(cfg, sort_keys=True, default=str), file=sys.stderr)
    print(f"config hash: {config_hash(cfg)}", file=sys.stderr)


def _optics(cfg: dict) -> OpticsConfig:
    return OpticsConfig(pupil_n=cfg["pupil_n"], psf_k=cfg["psf_k"])


def cmd_synth(cfg: dict) -> int:
    sources = image_folder(cfg["source_dir"]) if cfg.get("source_dir") else None
    ds = synth_dataset(cfg["n"], cfg["seed"], cfg["image_size"], _optics(cfg), sources, cfg["threads"])
    path = ds.save(cfg["out"])
    print(json.dumps({"manifest": str(path), "n_samples": len(ds)}))
    return 0


def train_config(cfg: dict) -> TrainConfig:
    model = ModelConfig(image_size=cfg["image_size"], restorer=RestorerConfig(),
                        graph=GraphConfig(grouping=cfg["grouping"]), optics=_optics(cfg))
    return TrainConfig(phase=cfg["phase"], iterations=cfg["iterations"], batch_size=cfg["batch"],
                       learning_rate=cfg["lr"], lr_decay=cfg["lr_decay"], seed=cfg["seed"], model=model,
                       lambda_mse=cfg["lambda1"], lambda_faa=cfg["lambda2"],
                       faa=FaaFlags(cfg["faa_r"], cfg["faa_c"], cfg["faa_z"]),
                       init_checkpoint=cfg["init_checkpoint"], log_every=cfg["log_every"])


def cmd_train(cfg: dict) -> int:
    if cfg["phase"] == "finetune" and not cfg.get("init_checkpoint"):
        raise UsageError("train --phase finetune requires --init-checkpoint")
    config = train_config(cfg)
    if cfg.get("data"):
        ds = Dataset.load(cfg["data"])
        if ds.optics != config.model.optics or ds.image_size != config.model.image_size:
            raise ConfigError("dataset optics/image size differ from the training flags; pass matching "
                              "--image-size/--pupil-n/--psf-k")
        data = FixedBatches(ds)
    else:
        data = ProceduralSource(config.model.image_size, config.model.optics)
    print(f"model config hash: {config.model.hash()}", file=sys.stderr)
    result = run_phase(config, data, cfg["out"],
                       progress=lambda row: print(json.dumps(row), file=sys.stderr))
    print(json.dumps({"checkpoint": str(result.checkpoint), "iterations": config.iterations,
                      "final": result.log[-1] if result.log else None}))
    return 0


def cmd_eval(cfg: dict) -> int:
    ds = Dataset.load(cfg["data"])
    evaluation = evaluate(cfg["checkpoint"], ds, threads=cfg["threads"])
    csv_path, json_path = write_report(evaluation, cfg["out"])
    print(json.dumps({"csv": str(csv_path), "json": str(json_path), **evaluation.report.to_dict()}))
    return 0


def cmd_predict(cfg: dict) -> int:
    ckpt = load_checkpoint(cfg["checkpoint"])
    if cfg.get("stack"):
        stack = np.stack([read_png16(p) for p in cfg["stack"]])
    elif cfg.get("data") and cfg.get("id"):
        ds = Dataset.load(cfg["data"])
        check_compatible(ckpt, ds)
        matches = [s for s in ds.samples if s.id == cfg["id"]]
        if not matches:
            raise ConfigError(f"no sample with id {cfg['id']!r} in {cfg['data']}")
        stack = matches[0].stack
    else:
        raise UsageError("predict needs --stack MINUS FOCUS PLUS or --data DIR --id ID")
    config = ModelConfig.from_dict(ckpt.meta["config"])
    restored, coeffs = predict(config, ckpt.params, stack[None], ckpt.meta.get("phase", "finetune"))
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_png16(out / "restored.png", restored[0])
    payload = {"ansi": list(zernike.MODE_INDICES), "coeffs": [float(c) for c in coeffs[0]]}
    (out / "coeffs.json").write_text(json.dumps(payload, indent=1))
    print(json.dumps({"restored": str(out / "restored.png"), "coeffs": str(out / "coeffs.json")}))
    return 0


def read_coefficients(path) -> np.ndarray:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read coefficient file {path}: {exc}") from exc
    if isinstance(raw, dict) and "coeffs" in raw:
        raw = raw["coeffs"]
    if isinstance(raw, dict):
        coeffs = np.zeros(zernike.N_MODES)
        for key, value in raw.items():
            j = int(key)
            if j not in zernike.MODE_INDICES:
                raise ConfigError(f"ANSI index {j} is outside {zernike.FIRST_MODE}..{zernike.LAST_MODE}")
            coeffs[j - zernike.FIRST_MODE] = float(value)
        return coeffs
    return zernike.validate_coefficients(raw)


def cmd_psf(cfg: dict) -> int:
    coeffs = read_coefficients(cfg["coeffs"])
    kernel = psf_from_coeffs(coeffs, _optics(cfg)).kernel
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_png16(out / "psf.png", kernel / kernel.max())
    np.savetxt(out / "psf.csv", kernel, delimiter=",", fmt="%.17g")
    print(json.dumps({"png": str(out / "psf.png"), "csv": str(out / "psf.csv"), "sum": float(kernel.sum())}))
    return 0


def cmd_groups(cfg: dict) -> int:
    print(json.dumps(zernike.grouping(cfg["grouping"]).to_json(), indent=1))
    return 0


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "predict": cmd_predict,
            "psf": cmd_psf, "groups": cmd_groups}


def _origin(exc: BaseException) -> str:
    frames = traceback.extract_tb(exc.__traceback__)
    return Path(frames[-1].filename).stem if frames else "zrnet"


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        announce(cfg)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"zrnet {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except ZRNetError as exc:
        print(f"zrnet {args.command}: {type(exc).__name__} in {_origin(exc)}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
