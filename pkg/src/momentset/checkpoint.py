"""Binary checkpoint format (little-endian):

  "MALC" | u32 version | u32 config-json length | config JSON (utf8) |
  u64 epochs_done | u64 optimizer step | u32 tensor count |
  per tensor: u32 name length | name utf8 | u32 ndim | u32 dims... |
              float64 payload row-major

Model parameters are stored under their own names, Adam moments under
"opt.m.<name>" / "opt.v.<name>". Round trips are bit-exact.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .errors import BadMagicError, CheckpointError, TruncatedFileError, VersionMismatchError
from .model import MomentSetModel
from .optim import Adam

MAGIC = b"MALC"
VERSION = 1


@dataclass
class CheckpointData:
    config: dict
    epochs_done: int
    step: int
    tensors: dict[str, np.ndarray]


def save_checkpoint(path, config: RunConfig, model: MomentSetModel,
                    optimizer: Adam, epochs_done: int):
    tensors: dict[str, np.ndarray] = {k: p.data for k, p in model.params.items()}
    for k in model.params:
        tensors[f"opt.m.{k}"] = optimizer.m[k]
        tensors[f"opt.v.{k}"] = optimizer.v[k]
    cfg_bytes = config.to_json().encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<4sII", MAGIC, VERSION, len(cfg_bytes)))
        f.write(cfg_bytes)
        f.write(struct.pack("<QQI", epochs_done, optimizer.step_count, len(tensors)))
        for name, arr in tensors.items():
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> CheckpointData:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 12:
        raise TruncatedFileError(f"{path}: shorter than the checkpoint header")
    magic, version, cfg_len = struct.unpack_from("<4sII", blob, 0)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {VERSION}")
    off = 12
    if len(blob) < off + cfg_len + 20:
        raise TruncatedFileError(f"{path}: truncated config block")
    config = json.loads(blob[off:off + cfg_len].decode("utf-8"))
    off += cfg_len
    epochs_done, step, count = struct.unpack_from("<QQI", blob, off)
    off += 20
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        if len(blob) < off + 4:
            raise TruncatedFileError(f"{path}: truncated tensor table")
        (name_len,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off:off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<I", blob, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        if len(blob) < off + size * 8:
            raise TruncatedFileError(f"{path}: truncated payload for '{name}'")
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=off).copy()
        tensors[name] = arr.reshape(shape)
        off += size * 8
    return CheckpointData(config, epochs_done, step, tensors)


def restore(data: CheckpointData, config: RunConfig, model: MomentSetModel,
            optimizer: Adam):
    """Load checkpointed tensors into an existing model/optimizer pair."""
    # epochs may grow on resume; everything else must match exactly
    saved = {k: v for k, v in data.config.items() if k != "epochs"}
    current = {k: v for k, v in config.to_dict().items() if k != "epochs"}
    if saved != current:
        raise CheckpointError("checkpoint config does not match the run config")
    for name, p in model.params.items():
        if name not in data.tensors:
            raise CheckpointError(f"checkpoint is missing parameter '{name}'")
        if data.tensors[name].shape != p.data.shape:
            raise CheckpointError(f"shape mismatch for parameter '{name}'")
        p.data = data.tensors[name].copy()
        optimizer.m[name] = data.tensors[f"opt.m.{name}"].copy()
        optimizer.v[name] = data.tensors[f"opt.v.{name}"].copy()
    optimizer.params = model.params
    optimizer.step_count = data.step
