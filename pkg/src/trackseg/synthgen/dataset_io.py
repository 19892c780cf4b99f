"""On-disk dataset format: 8-bit PNG frames + plain-text manifests.

Masks are stored as uncompressed run-length counts over the row-major
flattened mask, alternating 0-runs and 1-runs and always starting with the
0-run (which may be zero). Reading back a written dataset reproduces it
bitwise.
"""

from __future__ import annotations

import os
from dataclasses import asdict, fields

import numpy as np
from PIL import Image

from .sequences import GenConfig, SequenceRecord, config_from_dict
from .shapes import FrameRecord

SCHEMA_VERSION = 1


class DatasetError(ValueError):
    """Malformed manifest, RLE, or image payload; the message names the record."""


def rle_encode(mask: np.ndarray) -> list[int]:
    flat = np.asarray(mask, dtype=np.uint8).reshape(-1)
    if flat.size == 0:
        return [0]
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    runs = np.diff(np.concatenate(([0], boundaries, [flat.size]))).tolist()
    if flat[0] == 1:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def rle_decode(runs, height: int, width: int, context: str = "mask") -> np.ndarray:
    runs = list(runs)
    if any(r < 0 for r in runs):
        raise DatasetError(f"{context}: negative RLE run")
    total = sum(runs)
    if total != height * width:
        raise DatasetError(f"{context}: RLE covers {total} pixels, expected {height * width}")
    flat = np.zeros(height * width, dtype=bool)
    pos = 0
    value = False
    for run in runs:
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    return flat.reshape(height, width)


def _format_value(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_config_value(name: str, text: str):
    ftype = {f.name: f.type for f in fields(GenConfig)}[name]
    if ftype == "int":
        return int(text)
    if ftype == "float":
        return float(text)
    return text


def write_sequence(seq: SequenceRecord, directory: str):
    os.makedirs(directory, exist_ok=True)
    lines = [f"trackseg-dataset {SCHEMA_VERSION}", f"mode {seq.mode}", f"seed {seq.seed}"]
    for key in sorted(seq.config):
        lines.append(f"config {key} {_format_value(seq.config[key])}")
    h, w = seq.frames[0].image.shape[:2]
    lines.append(f"size {h} {w}")
    lines.append(f"frames {len(seq.frames)}")
    for t, frame in enumerate(seq.frames):
        name = f"frame_{t:03d}.png"
        img8 = np.clip(np.round(frame.image * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(img8, "RGB").save(os.path.join(directory, name))
        lines.append(f"frame {t} {name}")
        for oid, mask in zip(frame.object_ids, frame.masks):
            counts = " ".join(str(c) for c in rle_encode(mask))
            lines.append(f"object {oid} {counts}")
    lines.append("end")
    with open(os.path.join(directory, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_sequence(directory: str) -> SequenceRecord:
    manifest = os.path.join(directory, "manifest.txt")
    if not os.path.isfile(manifest):
        raise DatasetError(f"{directory}: missing manifest.txt")
    with open(manifest) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("trackseg-dataset "):
        raise DatasetError(f"{manifest}: not a trackseg dataset manifest")
    version = int(lines[0].split()[1])
    if version != SCHEMA_VERSION:
        raise DatasetError(f"{manifest}: unsupported schema version {version}")

    mode = seed = None
    config: dict = {}
    h = w = n_frames = None
    frames: list[FrameRecord] = []
    current: FrameRecord | None = None
    seen_ids: set[int] = set()
    frame_name = ""

    for ln in lines[1:]:
        parts = ln.split()
        tag = parts[0]
        if tag == "mode":
            mode = parts[1]
        elif tag == "seed":
            seed = int(parts[1])
        elif tag == "config":
            config[parts[1]] = _parse_config_value(parts[1], parts[2])
        elif tag == "size":
            h, w = int(parts[1]), int(parts[2])
        elif tag == "frames":
            n_frames = int(parts[1])
        elif tag == "frame":
            frame_name = parts[2]
            path = os.path.join(directory, frame_name)
            if not os.path.isfile(path):
                raise DatasetError(f"{manifest}: frame {parts[1]} references missing image {frame_name}")
            img8 = np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)
            if img8.shape[:2] != (h, w):
                raise DatasetError(f"{frame_name}: image is {img8.shape[:2]}, manifest says {(h, w)}")
            current = FrameRecord(image=img8.astype(np.float32) / 255.0)
            frames.append(current)
            seen_ids = set()
        elif tag == "object":
            if current is None:
                raise DatasetError(f"{manifest}: object record before any frame record")
            oid = int(parts[1])
            if oid in seen_ids:
                raise DatasetError(f"{frame_name}: object id {oid} listed twice")
            seen_ids.add(oid)
            runs = [int(p) for p in parts[2:]]
            current.object_ids.append(oid)
            current.masks.append(rle_decode(runs, h, w, context=f"{frame_name} object {oid}"))
        elif tag == "end":
            break
        else:
            raise DatasetError(f"{manifest}: unknown record {tag!r}")

    if mode is None or seed is None or n_frames is None:
        raise DatasetError(f"{manifest}: incomplete header")
    if len(frames) != n_frames:
        raise DatasetError(f"{manifest}: header promises {n_frames} frames, found {len(frames)}")
    return SequenceRecord(frames=frames, seed=seed, mode=mode, config=config)


def sequence_dirname(index: int) -> str:
    return f"seq_{index:05d}"


def write_dataset(sequences, path: str):
    os.makedirs(path, exist_ok=True)
    for i, seq in enumerate(sequences):
        write_sequence(seq, os.path.join(path, sequence_dirname(i)))


def read_dataset(path: str) -> list[SequenceRecord]:
    if not os.path.isdir(path):
        raise DatasetError(f"{path}: no such dataset directory")
    names = sorted(n for n in os.listdir(path) if n.startswith("seq_"))
    if not names:
        raise DatasetError(f"{path}: contains no seq_* directories")
    return [read_sequence(os.path.join(path, n)) for n in names]
