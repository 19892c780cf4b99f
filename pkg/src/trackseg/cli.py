"""Command-line front end: gen / train / infer / eval.

Every subcommand is deterministic given (config file, --set overrides,
seed, inputs). Override precedence: built-in defaults, then the --config
file, then explicit flags and --set pairs. Keys are dotted per namespace:
gen.*, model.*, train.*, assoc.*.

TRACKSEG_WORKERS (default 1) parallelizes sequence generation and
inference across processes; outputs do not depend on the worker count.
"""

from __future__ import annotations

import argparse
import multiprocessing
import os
import sys
from dataclasses import fields

import numpy as np

from . import associator as assoc_mod
from . import evalkit, viz
from .associator import AssocConfig, read_tracks, run_sequence, tokens_from_prediction, write_tracks
from .model import CheckpointError, ConfigError, ModelConfig, load_checkpoint
from .synthgen import DatasetError, GenConfig, GenerationError, generate_sequence
from .synthgen.dataset_io import read_sequence, sequence_dirname, write_sequence
from .train import TrainConfig, train_loop, write_train_config

WORKERS_ENV = "TRACKSEG_WORKERS"


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _parse_kv(pairs) -> dict:
    out = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep:
            raise SystemExit(f"error: --set expects key=value, got {pair!r}")
        out[key.strip()] = value.strip()
    return out


def _load_config_file(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise SystemExit(f"error: {path}: expected key=value, got {line!r}")
            out[key.strip()] = value.strip()
    return out


def _coerce(ftype: str, raw: str):
    if ftype == "int":
        return int(raw)
    if ftype == "float":
        return float(raw)
    if ftype == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return raw


def _apply_namespace(obj, namespace: str, kv: dict):
    """Assign dotted keys like 'train.seed' onto a dataclass instance."""
    types = {f.name: f.type for f in fields(obj)}
    for key, raw in kv.items():
        if not key.startswith(namespace + "."):
            continue
        name = key[len(namespace) + 1 :]
        if name not in types:
            raise SystemExit(f"error: unknown key {key!r} (valid: "
                             f"{', '.join(namespace + '.' + n for n in sorted(types))})")
        try:
            setattr(obj, name, _coerce(types[name], raw))
        except ValueError as exc:
            raise SystemExit(f"error: bad value for {key!r}: {exc}")
    return obj


def _gather_overrides(args) -> dict:
    kv = {}
    if args.config:
        kv.update(_load_config_file(args.config))
    kv.update(_parse_kv(args.set))
    return kv


def _known_namespaces_check(kv: dict):
    for key in kv:
        if key.split(".", 1)[0] not in ("gen", "model", "train", "assoc"):
            raise SystemExit(f"error: unknown config namespace in {key!r}")


# -- gen ---------------------------------------------------------------------


def _gen_one(payload):
    cfg, seed, directory = payload
    seq = generate_sequence(cfg, seed)
    write_sequence(seq, directory)
    return os.path.basename(directory)


def cmd_gen(args) -> int:
    kv = _gather_overrides(args)
    _known_namespaces_check(kv)
    cfg = _apply_namespace(GenConfig(), "gen", kv)
    if args.mode:
        cfg.mode = args.mode
    try:
        cfg = cfg.resolved()
    except ValueError as exc:
        raise SystemExit(f"error: {exc}")
    seed = args.seed
    os.makedirs(args.out, exist_ok=True)
    seq_seeds = [int(s) for s in np.random.SeedSequence(seed).generate_state(args.sequences)]
    jobs = [(cfg, seq_seeds[i], os.path.join(args.out, sequence_dirname(i)))
            for i in range(args.sequences)]
    workers = _worker_count()
    try:
        if workers > 1:
            with multiprocessing.Pool(workers) as pool:
                names = pool.map(_gen_one, jobs)
        else:
            names = [_gen_one(job) for job in jobs]
    except GenerationError as exc:
        raise SystemExit(f"error: generation failed: {exc}")
    lines = ["trackseg-datasetdir 1", f"seed {seed}", f"sequences {args.sequences}"]
    for key, value in sorted(cfg.__dict__.items()):
        lines.append(f"config {key} {value!r}" if isinstance(value, float) else f"config {key} {value}")
    lines.extend(f"sequence {n}" for n in names)
    with open(os.path.join(args.out, "dataset.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {args.sequences} {cfg.mode} sequences to {args.out}")
    return 0


# -- train ---------------------------------------------------------------------


def _read_dataset_dirs(path: str):
    if not os.path.isdir(path):
        raise SystemExit(f"error: {path}: no such dataset directory")
    names = sorted(n for n in os.listdir(path) if n.startswith("seq_"))
    if not names:
        raise SystemExit(f"error: {path}: contains no seq_* directories")
    try:
        return names, [read_sequence(os.path.join(path, n)) for n in names]
    except DatasetError as exc:
        raise SystemExit(f"error: {exc}")


def cmd_train(args) -> int:
    kv = _gather_overrides(args)
    _known_namespaces_check(kv)
    model_cfg = _apply_namespace(ModelConfig(), "model", kv)
    train_cfg = _apply_namespace(TrainConfig(), "train", kv)
    if args.seed is not None:
        train_cfg.seed = args.seed
    try:
        model_cfg.validate()
    except ConfigError as exc:
        raise SystemExit(f"error: {exc}")
    _names, sequences = _read_dataset_dirs(args.data)
    model = optimizer_arrays = None
    if args.checkpoint:
        try:
            model, optimizer_arrays = load_checkpoint(args.checkpoint)
        except CheckpointError as exc:
            raise SystemExit(f"error: {exc}")
        model_cfg = model.config
    os.makedirs(args.out, exist_ok=True)
    write_train_config(train_cfg, os.path.join(args.out, "train_config.txt"))

    def progress(row):
        print(f"step {row['step']:>6d}  total {row['total']:.4f}", file=sys.stderr)

    try:
        train_loop(sequences, model_cfg, train_cfg, out_dir=args.out,
                   model=model, optimizer_arrays=optimizer_arrays,
                   progress=progress if args.verbose else None)
    except (ValueError, ConfigError) as exc:
        raise SystemExit(f"error: {exc}")
    print(f"training complete; checkpoint_final.ckpt and metrics.log in {args.out}")
    return 0


# -- infer ---------------------------------------------------------------------


def _infer_one(payload):
    checkpoint, seq_dir, out_dir, assoc_kwargs = payload
    model, _ = load_checkpoint(checkpoint)
    seq = read_sequence(seq_dir)
    config = AssocConfig(**assoc_kwargs).validate()
    images = [np.ascontiguousarray(f.image.transpose(2, 0, 1)) for f in seq.frames]
    preds = model.forward_sequence(images)
    frame_tokens = [tokens_from_prediction(p, t) for t, p in enumerate(preds)]
    tracks, _bank = run_sequence(frame_tokens, config, n_frames=len(images))
    os.makedirs(out_dir, exist_ok=True)
    h, w = seq.frames[0].image.shape[:2]
    write_tracks(tracks, len(images), h, w, os.path.join(out_dir, "tracks.txt"))
    for t, frame in enumerate(seq.frames):
        viz.save_overlay(os.path.join(out_dir, f"overlay_{t:03d}.png"), frame.image, tracks, t)
    return os.path.basename(seq_dir)


def cmd_infer(args) -> int:
    kv = _gather_overrides(args)
    _known_namespaces_check(kv)
    assoc_cfg = _apply_namespace(AssocConfig(), "assoc", kv)
    try:
        assoc_cfg.validate()
        load_checkpoint(args.checkpoint)  # fail fast on a bad checkpoint
    except (CheckpointError, ValueError) as exc:
        raise SystemExit(f"error: {exc}")
    names, _ = _read_dataset_dirs(args.data)
    jobs = [(args.checkpoint, os.path.join(args.data, n), os.path.join(args.out, n),
             assoc_cfg.__dict__) for n in names]
    workers = _worker_count()
    try:
        if workers > 1:
            with multiprocessing.Pool(workers) as pool:
                done = pool.map(_infer_one, jobs)
        else:
            done = [_infer_one(job) for job in jobs]
    except (ConfigError, DatasetError) as exc:
        raise SystemExit(f"error: {exc}")
    print(f"wrote tracks and overlays for {len(done)} sequences to {args.out}")
    return 0


# -- eval ---------------------------------------------------------------------


def cmd_eval(args) -> int:
    names, sequences = _read_dataset_dirs(args.data)
    gts = [evalkit.gt_tracks_from_sequence(seq) for seq in sequences]
    preds = []
    for name in names:
        track_file = os.path.join(args.tracks, name, "tracks.txt")
        if os.path.isfile(track_file):
            try:
                tracks, _n, _h, _w = read_tracks(track_file)
            except DatasetError as exc:
                raise SystemExit(f"error: {exc}")
            preds.append(tracks)
        else:
            preds.append([])
    report = evalkit.evaluate(preds, gts, sequence_names=names)
    text = evalkit.format_report(report)
    sys.stdout.write(text)
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        with open(args.out, "w") as fh:
            fh.write(text)
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trackseg",
        description="Joint segmentation and tracking of unseen objects in discrete frames.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value file with dotted keys (gen.*, model.*, train.*, assoc.*)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one dotted config key (repeatable)")

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--mode", choices=["shelf", "tabletop"])
    p.add_argument("--sequences", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model on a generated dataset")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--checkpoint", help="resume from this checkpoint")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="segment + track sequences with a trained model")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score predicted tracks against dataset ground truth")
    common(p)
    p.add_argument("--data", required=True, help="ground-truth dataset directory")
    p.add_argument("--tracks", required=True, help="directory of per-sequence track files (from infer)")
    p.add_argument("--out", help="also write the report to this file")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
