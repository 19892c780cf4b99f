"""The five training loss terms.

Class/mask terms follow the usual set-prediction recipe (binary objectness
cross-entropy, per-pixel BCE, Dice). The two tracking terms act on unit-norm
track embeddings: a squared-cosine-distance pull on cross-frame same-object
pairs with a hinged push on negatives scaled by the hard-negative count, and
a temperature-scaled softmax (InfoNCE) loss over each frame's query set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor

MASK_FILL = -1.0e4  # additive log-domain mask; large against capped logits


@dataclass
class LossWeights:
    class_weight: float = 2.0
    bce_weight: float = 5.0
    dice_weight: float = 5.0
    contrastive_weight: float = 1.0
    infonce_weight: float = 1.0

    def __post_init__(self):
        vals = (self.class_weight, self.bce_weight, self.dice_weight,
                self.contrastive_weight, self.infonce_weight)
        if any(v < 0 for v in vals):
            raise ValueError("loss weights must be non-negative")
        if not any(v > 0 for v in vals):
            raise ValueError("at least one loss weight must be positive")


@dataclass
class ContrastiveConfig:
    margin: float = 0.5
    negative_iou_ceiling: float = 0.6
    negatives_per_anchor: int | None = 16
    tau_init: float = math.log(1.0 / 0.07)
    tau_cap: float = 100.0  # ceiling on e^tau

    def __post_init__(self):
        if not 0.0 < self.margin <= 1.0:
            raise ValueError("margin must lie in (0, 1]")
        if not 0.0 < self.negative_iou_ceiling < 1.0:
            raise ValueError("negative IoU ceiling must lie in (0, 1)")


def loss_class(score_logits: Tensor, match) -> Tensor:
    """Mean binary cross-entropy: matched queries labelled 1, rest 0."""
    labels = np.zeros(score_logits.shape[0], dtype=score_logits.dtype)
    for q, _ in match.pairs:
        labels[q] = 1.0
    # softplus(z) - z*y == BCE-with-logits for y in {0,1}
    return ad.sub(ad.softplus(score_logits), ad.mul(score_logits, Tensor(labels))).mean()


def loss_bce_mask(mask_logits: Tensor, gt_target) -> Tensor:
    """Per-pixel binary cross-entropy from logits against [0,1] targets."""
    g = Tensor(np.asarray(gt_target, dtype=mask_logits.dtype))
    return ad.sub(ad.softplus(mask_logits), ad.mul(mask_logits, g)).mean()


def loss_dice(pred_probs: Tensor, gt_mask) -> Tensor:
    """1 - 2|p.g| / (sum p^2 + sum g^2), smoothed with +1 top and bottom."""
    g = Tensor(np.asarray(gt_mask, dtype=pred_probs.dtype))
    if pred_probs.shape != g.shape:
        raise ad.DimensionError(f"dice extents differ: {pred_probs.shape} vs {g.shape}")
    inter = ad.mul(pred_probs, g).sum()
    denom = ad.add(ad.mul(pred_probs, pred_probs).sum(), ad.mul(g, g).sum())
    return ad.sub(1.0, ad.div(ad.add(ad.mul(inter, 2.0), 1.0), ad.add(denom, 1.0)))


def cosine_distance(r_i, r_j):
    """D = (1 - r_i . r_j) / 2 for unit-norm inputs; in [0, 1]."""
    if isinstance(r_i, Tensor) or isinstance(r_j, Tensor):
        return ad.mul(ad.sub(1.0, ad.mul(r_i, r_j).sum()), 0.5)
    return 0.5 * (1.0 - float(np.dot(np.asarray(r_i), np.asarray(r_j))))


class _TokenTable:
    """Flat view of a clip's tokens with their match status."""

    def __init__(self, embeddings_by_frame, matches_by_frame):
        self.embeddings = ad.concat(list(embeddings_by_frame), axis=0)
        self.counts = [e.shape[0] for e in embeddings_by_frame]
        self.frame = []
        self.query = []
        self.obj = []
        self.iou = []
        for f, match in enumerate(matches_by_frame):
            q2o = match.query_to_object
            for q in range(self.counts[f]):
                self.frame.append(f)
                self.query.append(q)
                self.obj.append(q2o.get(q))
                self.iou.append(float(match.max_iou[q]) if match.max_iou.size else 0.0)

    def matched(self):
        return [i for i, o in enumerate(self.obj) if o is not None]


def contrastive_terms(embeddings_by_frame, matches_by_frame, config: ContrastiveConfig,
                      rng: np.random.Generator | None = None):
    """(match term, non-match term) of the pull/push embedding loss.

    Match pairs: same object in two different frames. Non-match pairs: an
    anchor (matched token) against a token matched to a different object or
    an unmatched token whose best IoU is below the ceiling; optionally
    subsampled per anchor. The non-match sum divides by the count of pairs
    strictly inside the margin (0 when there are none).
    """
    table = _TokenTable(embeddings_by_frame, matches_by_frame)
    anchors = table.matched()

    pos_a, pos_b = [], []
    by_object: dict[int, list[int]] = {}
    for i in anchors:
        by_object.setdefault(table.obj[i], []).append(i)
    for toks in by_object.values():
        for ai in range(len(toks)):
            for bi in range(ai + 1, len(toks)):
                a, b = toks[ai], toks[bi]
                if table.frame[a] != table.frame[b]:
                    pos_a.append(a)
                    pos_b.append(b)

    neg_pairs = set()
    for a in anchors:
        candidates = []
        for b in range(len(table.obj)):
            if b == a:
                continue
            if table.obj[b] is not None:
                if table.obj[b] != table.obj[a]:
                    candidates.append(b)
            elif table.iou[b] < config.negative_iou_ceiling:
                candidates.append(b)
        if rng is not None and config.negatives_per_anchor is not None \
                and len(candidates) > config.negatives_per_anchor:
            picked = rng.choice(len(candidates), size=config.negatives_per_anchor, replace=False)
            candidates = [candidates[int(i)] for i in sorted(picked)]
        for b in candidates:
            neg_pairs.add((min(a, b), max(a, b)))

    zero = Tensor(np.zeros((), dtype=table.embeddings.dtype))
    if pos_a:
        ra = ad.take(table.embeddings, np.array(pos_a))
        rb = ad.take(table.embeddings, np.array(pos_b))
        d = ad.mul(ad.sub(1.0, ad.mul(ra, rb).sum(axis=-1)), 0.5)
        match_term = ad.mul(d, d).mean()
    else:
        match_term = zero

    if neg_pairs:
        na, nb = map(np.array, zip(*sorted(neg_pairs)))
        ra = ad.take(table.embeddings, na)
        rb = ad.take(table.embeddings, nb)
        d = ad.mul(ad.sub(1.0, ad.mul(ra, rb).sum(axis=-1)), 0.5)
        hinge = ad.relu(ad.sub(config.margin, d))
        n_hard = int(np.sum(hinge.values > 0))
        nonmatch_term = ad.div(hinge.sum(), float(n_hard)) if n_hard else zero
    else:
        nonmatch_term = zero
    return match_term, nonmatch_term


def loss_contrastive(embeddings_by_frame, matches_by_frame, config: ContrastiveConfig,
                     rng: np.random.Generator | None = None) -> Tensor:
    match_term, nonmatch_term = contrastive_terms(embeddings_by_frame, matches_by_frame, config, rng)
    return ad.add(match_term, nonmatch_term)


def loss_infonce(embeddings_by_frame, matches_by_frame, tau: Tensor,
                 identity_groups: dict | None = None, tau_cap: float = 100.0) -> Tensor:
    """Softmax tracking loss over each frame's query set.

    Every matched token is an anchor. For each frame containing the anchor's
    object, -log of the softmax probability of the matching query (logits are
    embedding dot products scaled by e^tau, capped). When a frame holds n
    queries whose objects are appearance-identical to the anchor's, the frame
    is replicated n times, each replica keeping exactly one of those
    positives in the denominator. Mean over all contributions.
    """
    table = _TokenTable(embeddings_by_frame, matches_by_frame)
    anchors = table.matched()
    if not anchors:
        return Tensor(np.zeros((), dtype=table.embeddings.dtype))

    def group(obj):
        return identity_groups.get(obj, obj) if identity_groups else obj

    scale = ad.exp(ad.minimum_const(tau, math.log(tau_cap)))
    anchor_r = ad.take(table.embeddings, np.array(anchors))

    n_frames = len(embeddings_by_frame)
    contributions = []
    for t in range(n_frames):
        # queries of frame t matched to each appearance group
        group_to_queries: dict = {}
        for q, obj in matches_by_frame[t].pairs:
            group_to_queries.setdefault(group(obj), []).append(q)

        rows, pos_cols, masks = [], [], []
        for ai, a in enumerate(anchors):
            positives = group_to_queries.get(group(table.obj[a]), [])
            for p in positives:
                rows.append(ai)
                pos_cols.append(p)
                mask = np.zeros(table.counts[t], dtype=table.embeddings.dtype)
                for other in positives:
                    if other != p:
                        mask[other] = MASK_FILL
                masks.append(mask)
        if not rows:
            continue

        logits = ad.mul(ad.matmul(anchor_r, ad.transpose(embeddings_by_frame[t], (1, 0))), scale)
        picked = ad.take(logits, np.array(rows))
        masked = ad.add(picked, Tensor(np.stack(masks)))
        lse = ad.logsumexp(masked, axis=-1)
        pos = ad.take(masked, (np.arange(len(rows)), np.array(pos_cols)))
        contributions.append(ad.sub(lse, pos))

    if not contributions:
        return Tensor(np.zeros((), dtype=table.embeddings.dtype))
    return ad.concat(contributions, axis=0).mean()


def total_loss(class_term, bce_term, dice_term, contra_term, infonce_term,
               weights: LossWeights) -> Tensor:
    out = ad.mul(class_term, weights.class_weight)
    out = ad.add(out, ad.mul(bce_term, weights.bce_weight))
    out = ad.add(out, ad.mul(dice_term, weights.dice_weight))
    out = ad.add(out, ad.mul(contra_term, weights.contrastive_weight))
    out = ad.add(out, ad.mul(infonce_term, weights.infonce_weight))
    return out
