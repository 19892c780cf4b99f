"""Binary checkpoints: magic, schema version, config, then named float32 tensors."""

from __future__ import annotations

import json
import struct

import numpy as np

from .config import ModelConfig
from .network import SegTrackNet

MAGIC = b"TRACKSEG"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str, model: SegTrackNet, extra_arrays: dict | None = None):
    """Write model parameters (plus optional optimizer arrays) little-endian."""
    entries: dict[str, np.ndarray] = {name: p.values for name, p in model.params()}
    for name, arr in (extra_arrays or {}).items():
        entries[name] = np.asarray(arr)
    cfg_blob = json.dumps(model.config.to_dict(), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(cfg_blob)))
        fh.write(cfg_blob)
        fh.write(struct.pack("<I", len(entries)))
        for name, arr in entries.items():
            blob = name.encode()
            data = np.asarray(arr, dtype="<f4")
            if data.ndim and not data.flags.c_contiguous:
                data = np.ascontiguousarray(data)
            fh.write(struct.pack("<H", len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<B", data.ndim))
            for d in data.shape:
                fh.write(struct.pack("<I", d))
            fh.write(data.tobytes())


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return data


def read_checkpoint_arrays(path: str):
    """Parse a checkpoint fully into (ModelConfig, name -> float32 array)."""
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path}: bad magic, not a trackseg checkpoint")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        (cfg_len,) = struct.unpack("<I", _read_exact(fh, 4, "config length"))
        config = ModelConfig.from_dict(json.loads(_read_exact(fh, cfg_len, "config")))
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "entry count"))
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "name length"))
            name = _read_exact(fh, name_len, "name").decode()
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1, "ndim"))
            shape = tuple(struct.unpack("<I", _read_exact(fh, 4, "dim"))[0] for _ in range(ndim))
            n = int(np.prod(shape, dtype=np.int64)) if shape else 1
            data = np.frombuffer(_read_exact(fh, 4 * n, name), dtype="<f4").reshape(shape)
            arrays[name] = data.astype(np.float32)
    return config, arrays


def load_checkpoint(path: str, dtype=np.float32):
    """Rebuild a model from a checkpoint, validating every parameter shape.

    Returns (model, extra_arrays) where extra arrays are the ``opt.*``
    entries. Nothing is mutated until the whole file parses.
    """
    config, arrays = read_checkpoint_arrays(path)
    model = SegTrackNet(config, seed=0, dtype=dtype)
    extras = {}
    expected = model.param_dict()
    for name, p in expected.items():
        if name not in arrays:
            raise CheckpointError(f"{path}: missing parameter {name!r}")
        if arrays[name].shape != p.shape:
            raise CheckpointError(
                f"{path}: parameter {name!r} has shape {arrays[name].shape}, "
                f"model config implies {p.shape}")
    for name, arr in arrays.items():
        if name in expected:
            expected[name].values = arr.astype(dtype)
        elif name.startswith("opt."):
            extras[name] = arr
        else:
            raise CheckpointError(f"{path}: unexpected entry {name!r}")
    return model, extras
