"""Binary parameter checkpoints with a JSON metadata sidecar.

Layout (little-endian)::

    b"ZRNK"  uint32 version
    repeated: uint32 name_len, name (utf-8), uint32 ndim, uint64 dims[ndim], float64 values
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from ..errors import CheckpointError

MAGIC = b"ZRNK"
VERSION = 1


@dataclass
class Checkpoint:
    params: Dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> Optional[str]:
        return self.meta.get("config_hash")


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def encode_params(params: Dict[str, np.ndarray], version: int = VERSION) -> bytes:
    chunks = [MAGIC, struct.pack("<I", version)]
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.tobytes())
    return b"".join(chunks)


def decode_params(blob: bytes) -> Dict[str, np.ndarray]:
    if blob[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if len(blob) < 8:
        raise CheckpointError("truncated checkpoint header")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"checkpoint format version {version} is not supported (expected {VERSION})")
    params, pos = {}, 8
    try:
        while pos < len(blob):
            (n,) = struct.unpack_from("<I", blob, pos)
            name = blob[pos + 4:pos + 4 + n].decode("utf-8")
            pos += 4 + n
            (ndim,) = struct.unpack_from("<I", blob, pos)
            shape = struct.unpack_from(f"<{ndim}Q", blob, pos + 4)
            pos += 4 + 8 * ndim
            count = int(np.prod(shape, dtype=np.int64))
            if pos + 8 * count > len(blob):
                raise CheckpointError(f"record {name!r} runs past the end of the file")
            params[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(shape).astype(np.float64)
            pos += 8 * count
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from exc
    return params


def save_checkpoint(path, params: Dict[str, np.ndarray], meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_params(params))
    sidecar_path(path).write_text(json.dumps(meta, indent=1, sort_keys=True))
    return path


def load_checkpoint(path, expected_hash: Optional[str] = None) -> Checkpoint:
    """Read a checkpoint; ``expected_hash`` guards against architecture/optics mismatches."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint {path} does not exist")
    params = decode_params(path.read_bytes())
    side = sidecar_path(path)
    meta = json.loads(side.read_text()) if side.exists() else {}
    if expected_hash is not None and meta.get("config_hash") != expected_hash:
        raise CheckpointError(f"checkpoint {path} was written for config {meta.get('config_hash')}, "
                              f"but the current config hashes to {expected_hash}")
    return Checkpoint(params, meta)
