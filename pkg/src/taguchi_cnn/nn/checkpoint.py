"""Model checkpoints.

Layout (all integers little-endian)::

    8 bytes   magic  b"TGCNNCK1"
    4 bytes   uint32 length L of the JSON header
    L bytes   UTF-8 JSON: {"format": 1, "spec": {...}, "n_params": P, "meta": {...}}
    8*P bytes float64 parameters, little-endian, in layer order (weight then bias)
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

from .model import ModelSpec, Params, flatten_params, unflatten_params

MAGIC = b"TGCNNCK1"
FORMAT_VERSION = 1


def save_checkpoint(path: str | Path, spec: ModelSpec, params: Params, meta: dict[str, Any] | None = None) -> Path:
    flat = flatten_params(params).astype("<f8")
    header = json.dumps(
        {"format": FORMAT_VERSION, "spec": spec.to_dict(), "n_params": int(flat.size), "meta": meta or {}},
        sort_keys=True,
    ).encode("utf-8")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(flat.tobytes())
    return path


def load_checkpoint(path: str | Path) -> tuple[ModelSpec, Params, dict[str, Any]]:
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (length,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(length).decode("utf-8"))
        if header.get("format") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint format {header.get('format')}")
        flat = np.frombuffer(fh.read(), dtype="<f8")
    if flat.size != header["n_params"]:
        raise ValueError(f"{path}: truncated parameter block")
    spec = ModelSpec.from_dict(header["spec"])
    return spec, unflatten_params(spec, flat.astype(np.float64)), header.get("meta", {})
