"""Bipartite assignment: the Hungarian solver and prediction-to-GT matching."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor


def hungarian(cost) -> list[tuple[int, int]]:
    """Minimum-cost injective assignment of min(m, n) row/column pairs.

    Shortest-augmenting-path formulation. Rows are introduced in ascending
    order and equal-cost columns are scanned low-index-first, so ties break
    deterministically toward low row then low column indices. Returns pairs
    sorted by row index.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.size == 0:
        return []
    if not np.all(np.isfinite(cost)):
        raise ValueError("hungarian requires finite costs")
    m, n = cost.shape
    transposed = m > n
    if transposed:
        cost = cost.T
        m, n = n, m

    u = np.zeros(m + 1)
    v = np.zeros(n + 1)
    # col_to_row[j] = row matched to column j (1-based sentinel scheme; index 0 = virtual)
    col_to_row = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, m + 1):
        col_to_row[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        way = np.zeros(n + 1, dtype=np.int64)
        while True:
            used[j0] = True
            i0 = col_to_row[j0]
            unused = ~used[1:]
            reduced = cost[i0 - 1] - u[i0] - v[1:]
            improve = unused & (reduced < minv[1:])
            minv[1:] = np.where(improve, reduced, minv[1:])
            way[1:][improve] = j0
            # argmin scans low columns first, so cost ties prefer low indices
            cand = np.where(unused, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            used_idx = np.flatnonzero(used)
            u[col_to_row[used_idx]] += delta
            v[used_idx] -= delta
            minv[1:] = np.where(unused, minv[1:] - delta, minv[1:])
            j0 = j1
            if col_to_row[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            col_to_row[j0] = col_to_row[j1]
            j0 = j1

    pairs = []
    for j in range(1, n + 1):
        if col_to_row[j] != 0:
            r, c = int(col_to_row[j] - 1), j - 1
            pairs.append((c, r) if transposed else (r, c))
    pairs.sort()
    return pairs


@dataclass
class MatchResult:
    """Optimal query-to-object assignment for one frame.

    ``pairs`` maps query index -> ground-truth object id; ``max_iou`` holds,
    per query, its best IoU against any ground-truth mask (used to pick
    contrastive negatives).
    """

    pairs: list[tuple[int, int]] = field(default_factory=list)
    unmatched: list[int] = field(default_factory=list)
    max_iou: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def query_to_object(self) -> dict[int, int]:
        return dict(self.pairs)


def downsample_mask(mask: np.ndarray, factor: int = 4) -> np.ndarray:
    """Block-average a binary H x W mask to (H/f) x (W/f) float targets."""
    h, w = mask.shape
    return mask.astype(np.float32).reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))


def pairwise_mask_costs(logits: np.ndarray, targets: np.ndarray):
    """Per-(query, object) BCE and Dice costs over flattened low-res masks.

    logits: [N_q, P] raw mask logits, targets: [N_gt, P] in [0, 1].
    """
    nq, p = logits.shape
    soft_pos = np.maximum(logits, 0.0) + np.log1p(np.exp(-np.abs(logits)))  # softplus(z)
    bce = soft_pos.mean(axis=1, keepdims=True) - (logits @ targets.T) / p
    probs = 1.0 / (1.0 + np.exp(-logits))
    inter = probs @ targets.T
    denom = (probs * probs).sum(axis=1, keepdims=True) + (targets * targets).sum(axis=1)[None, :]
    dice = 1.0 - (2.0 * inter + 1.0) / (denom + 1.0)
    return bce, dice


def mask_iou_matrix(pred_binary: np.ndarray, gt_binary: np.ndarray) -> np.ndarray:
    """IoU between each predicted and each ground-truth binary mask row."""
    p = pred_binary.astype(np.float32)
    g = gt_binary.astype(np.float32)
    inter = p @ g.T
    union = p.sum(axis=1, keepdims=True) + g.sum(axis=1)[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def match_predictions_to_gt(pred, gt_ids, gt_masks_lowres, weights) -> MatchResult:
    """Assign queries to ground-truth objects by class + mask cost.

    Tracking terms are deliberately excluded from the cost. ``pred`` needs
    ``score_logits`` ([N_q]) and ``mask_logits`` ([N_q, h, w]) tensors or
    arrays; ``gt_masks_lowres`` is [N_gt, h, w] float targets in [0, 1].
    """
    score_logits = pred.score_logits.values if isinstance(pred.score_logits, Tensor) else np.asarray(pred.score_logits)
    mask_logits = pred.mask_logits.values if isinstance(pred.mask_logits, Tensor) else np.asarray(pred.mask_logits)
    nq = score_logits.shape[0]
    n_gt = len(gt_ids)
    if n_gt > nq:
        raise ValueError(f"{n_gt} ground-truth objects exceed {nq} queries")
    if n_gt == 0:
        return MatchResult(pairs=[], unmatched=list(range(nq)), max_iou=np.zeros(nq, dtype=np.float32))

    flat_logits = mask_logits.reshape(nq, -1).astype(np.float64)
    flat_targets = np.asarray(gt_masks_lowres, dtype=np.float64).reshape(n_gt, -1)
    bce, dice = pairwise_mask_costs(flat_logits, flat_targets)
    # classification cost: -log sigmoid(z) for claiming "object present"
    log_s = -(np.maximum(-score_logits, 0.0) + np.log1p(np.exp(-np.abs(score_logits))))
    class_cost = -np.broadcast_to(log_s[:, None], (nq, n_gt))
    cost = weights.class_weight * class_cost + weights.bce_weight * bce + weights.dice_weight * dice

    pairs = [(q, gt_ids[j]) for q, j in hungarian(cost)]
    matched_queries = {q for q, _ in pairs}
    unmatched = [q for q in range(nq) if q not in matched_queries]

    iou = mask_iou_matrix(flat_logits > 0.0, flat_targets > 0.5)
    return MatchResult(pairs=sorted(pairs), unmatched=unmatched, max_iou=iou.max(axis=1).astype(np.float32))
