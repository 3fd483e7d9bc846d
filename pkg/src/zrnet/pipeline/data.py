"""Sample synthesis, 16-bit PNG I/O and on-disk datasets."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .. import zernike
from ..errors import DataError, ShapeError
from ..optics import OpticsConfig, phase_diverse

PNG_SCALE = 65535
MANIFEST = "manifest.json"
MIN_BLOBS, MAX_BLOBS = 3, 10
STACK_NAMES = ("minus", "focus", "plus")


@dataclass(frozen=True)
class Sample:
    id: str
    gt_image: np.ndarray  # (H, W) in [0, 1]
    coeffs: np.ndarray  # (25,)
    stack: np.ndarray  # (3, H, W)


def quantize(image) -> np.ndarray:
    """Snap [0, 1] values onto the 16-bit grid so PNG storage is lossless."""
    image = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    return np.round(image * PNG_SCALE) / PNG_SCALE


def write_png16(path, image) -> None:
    pixels = np.round(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * PNG_SCALE)
    Image.fromarray(pixels.astype(np.uint16)).save(path)


def read_png16(path) -> np.ndarray:
    """Read a 16-bit grayscale PNG back onto [0, 1]."""
    with _open_image(path) as im:
        if im.mode not in ("I;16", "I"):
            raise DataError(f"{path}: expected a 16-bit grayscale PNG, got mode {im.mode}")
        return np.asarray(im, dtype=np.float64) / PNG_SCALE


def _open_image(path):
    try:
        im = Image.open(path)
        im.load()
    except (OSError, UnidentifiedImageError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    return im


def procedural_image(rng: np.random.Generator, size: int) -> np.ndarray:
    """Gaussian-profile ellipses on a dark background, peak-normalized and 16-bit quantized."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    image = np.zeros((size, size))
    for _ in range(int(rng.integers(MIN_BLOBS, MAX_BLOBS + 1))):
        cy, cx = rng.uniform(0.1, 0.9, size=2) * size
        major = rng.uniform(size / 32, size / 8)
        minor = major * rng.uniform(0.4, 1.0)
        theta = rng.uniform(0.0, np.pi)
        amp = rng.uniform(0.3, 1.0)
        dy, dx = yy - cy, xx - cx
        u = dx * np.cos(theta) + dy * np.sin(theta)
        v = -dx * np.sin(theta) + dy * np.cos(theta)
        image += amp * np.exp(-0.5 * ((u / major) ** 2 + (v / minor) ** 2))
    return quantize(image / image.max())


def load_grayscale(path, size: int) -> np.ndarray:
    """Read any Pillow-readable image, convert to grayscale, resize and rescale to [0, 1]."""
    with _open_image(path) as im:
        if im.width == 0 or im.height == 0:
            raise DataError(f"{path}: empty image")
        if im.mode in ("I;16", "I", "F"):
            gray = Image.fromarray(np.asarray(im, dtype=np.float32))
        else:
            gray = Image.fromarray(np.asarray(im.convert("L"), dtype=np.float32))
    arr = np.asarray(gray.resize((size, size), Image.Resampling.BILINEAR), dtype=np.float64)
    lo, hi = arr.min(), arr.max()
    if not hi > lo:
        return np.zeros((size, size))
    return quantize((arr - lo) / (hi - lo))


def synth_sample(rng: np.random.Generator, image_size: int = 64, optics: OpticsConfig = OpticsConfig(),
                 source: Union[str, Path] = "procedural", sample_id: str = "0") -> Sample:
    """Draw one training sample.

    ``source`` is either ``"procedural"`` or a path to a grayscale image.
    Coefficients are drawn fresh from U[-1, 1] on every call.
    """
    if isinstance(source, str) and source == "procedural":
        gt = procedural_image(rng, image_size)
    else:
        gt = load_grayscale(source, image_size)
    coeffs = zernike.sample_coefficients(rng)
    return Sample(sample_id, gt, coeffs, phase_diverse(gt, coeffs, optics))


def regenerate_stack(sample: Sample, optics: OpticsConfig) -> np.ndarray:
    return phase_diverse(sample.gt_image, sample.coeffs, optics)


def sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, 3, index])


@dataclass
class Dataset:
    samples: List[Sample]
    optics: OpticsConfig
    image_size: int

    def __len__(self) -> int:
        return len(self.samples)

    def arrays(self, indices: Optional[Sequence[int]] = None):
        """(stacks (B, 3, H, W), gt images (B, H, W), coeffs (B, 25))."""
        chosen = self.samples if indices is None else [self.samples[i] for i in indices]
        return (np.stack([s.stack for s in chosen]), np.stack([s.gt_image for s in chosen]),
                np.stack([s.coeffs for s in chosen]))

    def save(self, out_dir) -> Path:
        """Write 16-bit PNGs for every image plus a JSON manifest."""
        out = Path(out_dir)
        (out / "images").mkdir(parents=True, exist_ok=True)
        entries = []
        for s in self.samples:
            paths = {"gt": f"images/{s.id}_gt.png"}
            write_png16(out / paths["gt"], s.gt_image)
            for name, channel in zip(STACK_NAMES, s.stack):
                paths[name] = f"images/{s.id}_{name}.png"
                write_png16(out / paths[name], channel)
            entries.append({"id": s.id, "files": paths, "coeffs": [float(c) for c in s.coeffs]})
        manifest = {"image_size": self.image_size, "optics": self.optics.to_dict(),
                    "mode_indices": list(zernike.MODE_INDICES), "samples": entries}
        path = out / MANIFEST
        path.write_text(json.dumps(manifest, indent=1))
        return path

    @classmethod
    def load(cls, path) -> "Dataset":
        """Load a dataset directory (or its manifest).

        Ground truth is read from PNG; the stack is regenerated from
        (gt, coeffs) so it is bit-identical to the synthesized one, and is
        checked against the stored channels to within the 16-bit step.
        """
        path = Path(path)
        manifest_path = path / MANIFEST if path.is_dir() else path
        if not manifest_path.exists():
            raise DataError(f"no dataset manifest at {manifest_path}")
        root = manifest_path.parent
        manifest = json.loads(manifest_path.read_text())
        optics = OpticsConfig(**manifest["optics"])
        size = int(manifest["image_size"])
        samples = []
        for entry in manifest["samples"]:
            gt = read_png16(root / entry["files"]["gt"])
            if gt.shape != (size, size):
                raise ShapeError(f"sample {entry['id']}: image {gt.shape} != {size}x{size}")
            coeffs = zernike.validate_coefficients(entry["coeffs"])
            stack = phase_diverse(gt, coeffs, optics)
            for name, channel in zip(STACK_NAMES, stack):
                stored = read_png16(root / entry["files"][name])
                if np.max(np.abs(stored - np.clip(channel, 0.0, 1.0))) > 1.0 / PNG_SCALE:
                    raise DataError(f"sample {entry['id']}: stored {name} channel does not match "
                                    "the stack regenerated from its ground truth and coefficients")
            samples.append(Sample(str(entry["id"]), gt, coeffs, stack))
        return cls(samples, optics, size)


def synth_dataset(n: int, seed: int, image_size: int = 64, optics: OpticsConfig = OpticsConfig(),
                  sources: Optional[Sequence[Union[str, Path]]] = None, threads: int = 1) -> Dataset:
    """Synthesize ``n`` samples; sample ``i`` depends only on (seed, i).

    With ``sources`` the ground truths cycle through the given image files.
    Results do not depend on ``threads``.
    """
    if sources is not None and len(sources) == 0:
        raise DataError("image folder contains no readable images")

    def make(i):
        src = "procedural" if sources is None else sources[i % len(sources)]
        return synth_sample(sample_rng(seed, i), image_size, optics, src, sample_id=f"{i:06d}")

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            samples = list(pool.map(make, range(n)))
    else:
        samples = [make(i) for i in range(n)]
    return Dataset(samples, optics, image_size)


IMAGE_SUFFIXES = (".png", ".tif", ".tiff", ".jpg", ".jpeg", ".bmp")


def image_folder(folder) -> List[Path]:
    folder = Path(folder)
    if not folder.is_dir():
        raise DataError(f"{folder} is not a directory")
    return sorted(p for p in folder.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


class FixedBatches:
    """Minibatches drawn without replacement from a fixed set of samples."""

    def __init__(self, dataset: Dataset):
        if len(dataset) == 0:
            raise DataError("cannot train on an empty dataset")
        self.dataset = dataset

    def batch(self, rng: np.random.Generator, size: int):
        n = len(self.dataset)
        if size >= n:
            idx = np.arange(n)
        else:
            idx = np.sort(rng.choice(n, size=size, replace=False))
        return self.dataset.arrays(idx)


class ProceduralSource:
    """Fresh procedural images and coefficients for every batch."""

    def __init__(self, image_size: int, optics: OpticsConfig):
        self.image_size = image_size
        self.optics = optics

    def batch(self, rng: np.random.Generator, size: int):
        samples = [synth_sample(rng, self.image_size, self.optics) for _ in range(size)]
        return Dataset(samples, self.optics, self.image_size).arrays()
