"""Set-prediction training over generated sequences.

Each step samples sequences, draws K frames from each without replacement,
applies one joint augmentation (color jitter + rotation) to the whole clip,
then matches and supervises the predictions of the initial queries and of
every decoder block. Tracking losses skip the initial queries: those are
shared across frames, so same/different-object pairs built from them are
degenerate.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, fields

import numpy as np

from .. import autodiff as ad
from ..autodiff import Adam, Tape, Tensor
from ..model import SegTrackNet, save_checkpoint
from .losses import (
    ContrastiveConfig,
    LossWeights,
    loss_class,
    loss_contrastive,
    loss_infonce,
)
from .matching import downsample_mask, match_predictions_to_gt

_TRAIN_TAG = 0x54524E


@dataclass
class TrainConfig:
    seed: int = 0
    iterations: int = 4000
    batch_size: int = 4
    frames_per_sample: int = 2
    learning_rate: float = 2e-4
    decay_step: int = 3500
    decay_factor: float = 0.1
    class_weight: float = 2.0
    bce_weight: float = 5.0
    dice_weight: float = 5.0
    contrastive_weight: float = 1.0
    infonce_weight: float = 1.0
    margin: float = 0.5
    negative_iou_ceiling: float = 0.6
    negatives_per_anchor: int = 16
    color_jitter: float = 0.2
    rotation_degrees: float = 20.0
    checkpoint_every: int = 1000
    log_every: int = 25

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.class_weight, self.bce_weight, self.dice_weight,
                           self.contrastive_weight, self.infonce_weight)

    def contrastive(self) -> ContrastiveConfig:
        return ContrastiveConfig(margin=self.margin,
                                 negative_iou_ceiling=self.negative_iou_ceiling,
                                 negatives_per_anchor=self.negatives_per_anchor or None)


# paper-scale schedule, kept as a preset rather than the default
train_presets = {
    "desk": TrainConfig(),
    "paper-shelf": TrainConfig(iterations=16000, decay_step=14000, learning_rate=1e-5,
                               batch_size=32, frames_per_sample=2),
    "paper-tabletop": TrainConfig(iterations=16000, decay_step=14000, learning_rate=1e-5,
                                  batch_size=8, frames_per_sample=4),
}


def write_train_config(cfg: TrainConfig, path: str):
    with open(path, "w") as fh:
        for key, value in asdict(cfg).items():
            fh.write(f"{key}={value!r}\n" if isinstance(value, float) else f"{key}={value}\n")


def load_train_config(path: str) -> TrainConfig:
    types = {f.name: f.type for f in fields(TrainConfig)}
    kwargs = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, raw = line.partition("=")
            key = key.strip()
            if key not in types:
                raise ValueError(f"{path}: unknown train config key {key!r}")
            kwargs[key] = int(raw) if types[key] == "int" else float(raw) if types[key] == "float" else raw
    return TrainConfig(**kwargs)


# -- augmentation -------------------------------------------------------------


def rotate_nearest(image: np.ndarray, masks: list, angle: float):
    """Rotate an HWC image and its masks about the center, nearest-neighbour."""
    h, w = image.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.mgrid[0:h, 0:w]
    c, s = math.cos(-angle), math.sin(-angle)
    sy = np.round(cy + (ys - cy) * c - (xs - cx) * s).astype(np.int64)
    sx = np.round(cx + (ys - cy) * s + (xs - cx) * c).astype(np.int64)
    valid = (sy >= 0) & (sy < h) & (sx >= 0) & (sx < w)
    syc = np.clip(sy, 0, h - 1)
    sxc = np.clip(sx, 0, w - 1)
    out = np.where(valid[:, :, None], image[syc, sxc], 0.0).astype(image.dtype)
    out_masks = [np.where(valid, m[syc, sxc], False) for m in masks]
    return out, out_masks


def draw_augment_params(cfg: TrainConfig, rng: np.random.Generator):
    """Per-clip jitter gains and rotation angle (shared by every frame)."""
    gains = 1.0 + rng.uniform(-cfg.color_jitter, cfg.color_jitter, size=3) \
        if cfg.color_jitter > 0 else None
    angle = math.radians(float(rng.uniform(-cfg.rotation_degrees, cfg.rotation_degrees))) \
        if cfg.rotation_degrees > 0 else 0.0
    return gains, angle


def augment_clip(images: list, gt_per_frame: list, gains, angle: float):
    """Apply one (gains, angle) draw identically to every frame of a clip.

    Objects whose rotated mask ends up empty are dropped from that frame's
    targets; their ids persist in other frames.
    """
    out_images, out_gt = [], []
    for image, (ids, masks) in zip(images, gt_per_frame):
        img = image
        if gains is not None:
            img = np.clip(img * gains[None, None, :], 0.0, 1.0).astype(np.float32)
        kept_masks = list(masks)
        if angle != 0.0:
            img, kept_masks = rotate_nearest(img, kept_masks, angle)
        keep = [(oid, m) for oid, m in zip(ids, kept_masks) if m.any()]
        out_images.append(img)
        out_gt.append(([oid for oid, _ in keep], [m for _, m in keep]))
    return out_images, out_gt


# -- loss assembly -------------------------------------------------------------


def _mean_scalars(terms, dtype=np.float32):
    if not terms:
        return Tensor(np.zeros((), dtype=dtype))
    if len(terms) == 1:
        return terms[0]
    return ad.stack(terms, axis=0).mean()


def _mask_losses(pred, match, gt_ids, gt_lowres):
    """Batched BCE + Dice over this frame's matched (query, object) pairs."""
    if not match.pairs:
        return None, None
    queries = np.array([q for q, _ in match.pairs])
    targets = np.stack([gt_lowres[gt_ids.index(oid)] for _, oid in match.pairs])
    n, h4, w4 = targets.shape
    z = ad.reshape(ad.take(pred.mask_logits, queries), (n, h4 * w4))
    g = Tensor(targets.reshape(n, h4 * w4).astype(z.dtype))
    bce = ad.sub(ad.softplus(z), ad.mul(z, g)).mean()
    probs = ad.sigmoid(z)
    inter = ad.mul(probs, g).sum(axis=1)
    denom = ad.add(ad.mul(probs, probs).sum(axis=1), ad.mul(g, g).sum(axis=1))
    dice = ad.sub(1.0, ad.div(ad.add(ad.mul(inter, 2.0), 1.0), ad.add(denom, 1.0))).mean()
    return bce, dice


def clip_loss_terms(model: SegTrackNet, images, gt_per_frame, weights: LossWeights,
                    contra_cfg: ContrastiveConfig, rng=None, identity_groups=None):
    """Five loss terms for one clip, averaged over supervised decoder layers.

    ``images`` are HWC float frames; ``gt_per_frame`` is [(ids, masks)].
    """
    chw = [np.ascontiguousarray(img.transpose(2, 0, 1)) for img in images]
    layers = model.forward_sequence(chw, with_aux=True)
    lowres = [(ids, [downsample_mask(m) for m in masks]) for ids, masks in gt_per_frame]

    class_terms, bce_terms, dice_terms, contra_list, info_list = [], [], [], [], []
    for layer_idx, frame_preds in enumerate(layers):
        matches = []
        for t, pred in enumerate(frame_preds):
            ids, targets = lowres[t]
            match = match_predictions_to_gt(pred, ids, targets, weights)
            matches.append(match)
            class_terms.append(loss_class(pred.score_logits, match))
            bce, dice = _mask_losses(pred, match, ids, targets)
            if bce is not None:
                bce_terms.append(bce)
                dice_terms.append(dice)
        if layer_idx >= 1:
            embeds = [p.embeddings for p in frame_preds]
            contra_list.append(loss_contrastive(embeds, matches, contra_cfg, rng))
            info_list.append(loss_infonce(embeds, matches, model.log_temp,
                                          identity_groups, contra_cfg.tau_cap))
    return {
        "class": _mean_scalars(class_terms),
        "ce": _mean_scalars(bce_terms),
        "dice": _mean_scalars(dice_terms),
        "contra": _mean_scalars(contra_list),
        "softmax": _mean_scalars(info_list),
    }


def weighted_total(terms: dict, weights: LossWeights) -> Tensor:
    from .losses import total_loss

    return total_loss(terms["class"], terms["ce"], terms["dice"],
                      terms["contra"], terms["softmax"], weights)


# -- the loop -------------------------------------------------------------------


METRIC_COLUMNS = ("step", "class", "ce", "dice", "contra", "softmax", "total")


def train_loop(sequences, model_config, train_config: TrainConfig, out_dir: str | None = None,
               groups_by_sequence: dict | None = None, model: SegTrackNet | None = None,
               optimizer_arrays: dict | None = None, progress=None):
    """Run the optimizer; returns (model, metrics rows).

    Deterministic in (sequences, configs, seed). When ``out_dir`` is given,
    writes metrics.log plus periodic and final checkpoints; resuming from a
    checkpoint's optimizer arrays continues the step counter.
    """
    if not sequences:
        raise ValueError("empty training dataset")
    for seq in sequences:
        if train_config.frames_per_sample > len(seq.frames):
            raise ValueError(
                f"frames_per_sample {train_config.frames_per_sample} exceeds "
                f"sequence length {len(seq.frames)}")

    weights = train_config.loss_weights()
    contra_cfg = train_config.contrastive()
    if model is None:
        model = SegTrackNet(model_config, seed=train_config.seed)
    opt = Adam(model.param_dict(), lr=train_config.learning_rate,
               decay_step=train_config.decay_step, decay_factor=train_config.decay_factor)
    if optimizer_arrays:
        opt.load_state_arrays(optimizer_arrays)
    rng = np.random.default_rng([train_config.seed, _TRAIN_TAG])
    # replay the data stream up to the resume point so a resumed run matches
    for _ in range(opt.step_count):
        _draw_batch(sequences, train_config, rng, consume_only=True)

    metrics_rows = []
    log_fh = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        mode = "a" if optimizer_arrays else "w"
        log_fh = open(os.path.join(out_dir, "metrics.log"), mode)
        if mode == "w":
            log_fh.write(" ".join(METRIC_COLUMNS) + "\n")

    start = opt.step_count
    for step in range(start + 1, train_config.iterations + 1):
        batch = _draw_batch(sequences, train_config, rng)
        # negatives get a per-step stream so resume replay stays exact
        neg_rng = np.random.default_rng([train_config.seed, _TRAIN_TAG, step])
        term_values = {k: 0.0 for k in ("class", "ce", "dice", "contra", "softmax", "total")}
        with Tape() as tape:
            sample_totals = []
            for seq_idx, images, gt in batch:
                groups = (groups_by_sequence or {}).get(seq_idx)
                terms = clip_loss_terms(model, images, gt, weights, contra_cfg, neg_rng, groups)
                total = weighted_total(terms, weights)
                sample_totals.append(total)
                for key, tensor in terms.items():
                    term_values[key] += float(tensor.values) / len(batch)
                term_values["total"] += float(total.values) / len(batch)
            batch_loss = _mean_scalars(sample_totals)
            tape.backward(batch_loss)
        opt.step()
        opt.zero_grad()

        row = {"step": step, **term_values}
        metrics_rows.append(row)
        if log_fh and (step % train_config.log_every == 0 or step == train_config.iterations):
            log_fh.write(" ".join(repr(row[c]) if isinstance(row[c], float) else str(row[c])
                                  for c in METRIC_COLUMNS) + "\n")
            log_fh.flush()
        if progress and (step % train_config.log_every == 0 or step == 1):
            progress(row)
        if out_dir and train_config.checkpoint_every > 0 and step % train_config.checkpoint_every == 0 \
                and step != train_config.iterations:
            save_checkpoint(os.path.join(out_dir, f"checkpoint_{step:06d}.ckpt"),
                            model, opt.state_arrays())

    if out_dir:
        save_checkpoint(os.path.join(out_dir, "checkpoint_final.ckpt"), model, opt.state_arrays())
        log_fh.close()
    return model, metrics_rows


def _draw_batch(sequences, cfg: TrainConfig, rng, consume_only=False):
    """Sample (sequence, frames, augmentation) triples from the data stream.

    With ``consume_only`` the rng draws happen but no image work does, which
    is how a resumed run fast-forwards to an identical stream position.
    """
    picks = rng.integers(len(sequences), size=cfg.batch_size)
    batch = []
    for seq_idx in picks:
        seq = sequences[int(seq_idx)]
        frame_ids = np.sort(rng.choice(len(seq.frames), size=cfg.frames_per_sample, replace=False))
        gains, angle = draw_augment_params(cfg, rng)
        if consume_only:
            continue
        images = [seq.frames[t].image for t in frame_ids]
        gt = [(list(seq.frames[t].object_ids), list(seq.frames[t].masks)) for t in frame_ids]
        images, gt = augment_clip(images, gt, gains, angle)
        batch.append((int(seq_idx), images, gt))
    return batch
