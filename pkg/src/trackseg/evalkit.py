"""Video-AP evaluation over mask sequences.

IoU is computed at the level of whole mask sequences (intersections and
unions summed over frames), predictions greedily claim ground truth in
confidence order, and AP is the 101-point interpolated area under the PR
curve. Image AP applies the same machinery per frame, ignoring identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ALL_THRESHOLDS = tuple(np.round(np.arange(0.50, 0.96, 0.05), 2))


@dataclass
class TrackPrediction:
    track_id: int
    score: float
    masks: list  # per frame: bool [H, W] or None where the track is silent


@dataclass
class GroundTruthTrack:
    object_id: int
    masks: list  # per frame: bool [H, W] or None where absent/occluded


@dataclass
class PRCurve:
    """(recall, precision) points, one per confidence threshold, recall ascending."""

    recalls: list = field(default_factory=list)
    precisions: list = field(default_factory=list)
    thresholds: list = field(default_factory=list)


def _empty(mask) -> bool:
    return mask is None or not mask.any()


def sequence_iou(pred: TrackPrediction, gt: GroundTruthTrack) -> float:
    """Sum of per-frame intersections over sum of per-frame unions."""
    if len(pred.masks) != len(gt.masks):
        raise ValueError(f"frame counts differ: {len(pred.masks)} vs {len(gt.masks)}")
    inter = union = 0
    for p, g in zip(pred.masks, gt.masks):
        if _empty(p) and _empty(g):
            continue
        if _empty(p):
            union += int(g.sum())
        elif _empty(g):
            union += int(p.sum())
        else:
            if p.shape != g.shape:
                raise ValueError(f"mask extents differ: {p.shape} vs {g.shape}")
            inter += int((p & g).sum())
            union += int((p | g).sum())
    return inter / union if union else 0.0


def gt_tracks_from_sequence(seq) -> list[GroundTruthTrack]:
    """Per-object mask series from a generated/loaded SequenceRecord."""
    n_frames = len(seq.frames)
    by_id: dict[int, list] = {}
    for t, frame in enumerate(seq.frames):
        for oid, mask in zip(frame.object_ids, frame.masks):
            by_id.setdefault(oid, [None] * n_frames)[t] = mask
    tracks = [GroundTruthTrack(object_id=oid, masks=m) for oid, m in sorted(by_id.items())]
    return [t for t in tracks if any(not _empty(m) for m in t.masks)]


def match_tracks(preds, gts, iou_threshold: float):
    """Greedy TP/FP labelling, COCO-style.

    Predictions are visited in descending confidence (ties by track id);
    each claims the highest-IoU unclaimed ground truth at or above the
    threshold (IoU ties go to the lowest GT index). Returns
    [(score, is_tp, track_id)] in visit order.
    """
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, preds[i].track_id))
    claimed = set()
    labels = []
    for i in order:
        best_iou, best_j = 0.0, None
        for j, gt in enumerate(gts):
            if j in claimed:
                continue
            iou = sequence_iou(preds[i], gt)
            if iou > best_iou:
                best_iou, best_j = iou, j
        if best_j is not None and best_iou >= iou_threshold:
            claimed.add(best_j)
            labels.append((preds[i].score, True, preds[i].track_id))
        else:
            labels.append((preds[i].score, False, preds[i].track_id))
    return labels


def build_pr_curve(labeled, total_gt: int) -> PRCurve:
    """PR points from pooled (score, is_tp, ...) labels, highest score first."""
    curve = PRCurve()
    ordered = sorted(labeled, key=lambda r: -r[0])
    tp = fp = 0
    for row in ordered:
        tp += int(row[1])
        fp += int(not row[1])
        curve.recalls.append(tp / total_gt)
        curve.precisions.append(tp / (tp + fp))
        curve.thresholds.append(row[0])
    return curve


def average_precision(labeled, total_gt: int):
    """101-point interpolated AP; None when there is no ground truth."""
    if total_gt < 1:
        return None
    curve = build_pr_curve(labeled, total_gt)
    recalls = np.asarray(curve.recalls)
    # precision envelope: max precision at recall >= r
    envelope = np.asarray(curve.precisions)
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])
    total = 0.0
    for r in np.linspace(0.0, 1.0, 101):
        idx = np.searchsorted(recalls, r, side="left")
        total += envelope[idx] if idx < len(envelope) else 0.0
    return total / 101.0


def _pool_video_labels(preds_by_seq, gts_by_seq, threshold: float):
    labeled = []
    total_gt = 0
    for s, (preds, gts) in enumerate(zip(preds_by_seq, gts_by_seq)):
        for score, is_tp, tid in match_tracks(preds, gts, threshold):
            labeled.append((score, is_tp, (s, tid)))
        total_gt += len(gts)
    return labeled, total_gt


def video_ap(preds_by_seq, gts_by_seq, threshold: float):
    """Dataset-level AP over sequence-level IoU at one threshold."""
    labeled, total_gt = _pool_video_labels(preds_by_seq, gts_by_seq, threshold)
    return average_precision(labeled, total_gt)


def ap_at_all(preds_by_seq, gts_by_seq, thresholds=ALL_THRESHOLDS):
    """Mean AP over the threshold ladder; 0.0 for empty predictions."""
    values = []
    for thr in thresholds:
        ap = video_ap(preds_by_seq, gts_by_seq, float(thr))
        if ap is None:
            return None
        values.append(ap)
    return float(np.mean(values))


def _frame_instances(preds_by_seq, gts_by_seq):
    """Flatten tracks into per-frame detections/ground truths, ignoring identity."""
    det_groups = []
    gt_counts = 0
    for preds, gts in zip(preds_by_seq, gts_by_seq):
        n_frames = len(gts[0].masks) if gts else (len(preds[0].masks) if preds else 0)
        for t in range(n_frames):
            dets = [(p.score, p.masks[t], p.track_id) for p in preds if not _empty(p.masks[t])]
            gmasks = [g.masks[t] for g in gts if not _empty(g.masks[t])]
            det_groups.append((dets, gmasks))
            gt_counts += len(gmasks)
    return det_groups, gt_counts


def image_ap(preds_by_seq, gts_by_seq, threshold: float):
    """Per-frame instance AP pooled over every frame of every sequence."""
    det_groups, total_gt = _frame_instances(preds_by_seq, gts_by_seq)
    labeled = []
    for group_idx, (dets, gmasks) in enumerate(det_groups):
        order = sorted(range(len(dets)), key=lambda i: (-dets[i][0], dets[i][2]))
        claimed = set()
        for i in order:
            score, mask, tid = dets[i]
            best_iou, best_j = 0.0, None
            for j, g in enumerate(gmasks):
                if j in claimed:
                    continue
                inter = int((mask & g).sum())
                union = int((mask | g).sum())
                iou = inter / union if union else 0.0
                if iou > best_iou:
                    best_iou, best_j = iou, j
            if best_j is not None and best_iou >= threshold:
                claimed.add(best_j)
                labeled.append((score, True, (group_idx, tid)))
            else:
                labeled.append((score, False, (group_idx, tid)))
    return average_precision(labeled, total_gt)


def image_ap_at_all(preds_by_seq, gts_by_seq, thresholds=ALL_THRESHOLDS):
    values = []
    for thr in thresholds:
        ap = image_ap(preds_by_seq, gts_by_seq, float(thr))
        if ap is None:
            return None
        values.append(ap)
    return float(np.mean(values))


def evaluate(preds_by_seq, gts_by_seq, sequence_names=None) -> dict:
    """Full report: dataset video/image AP plus a per-sequence breakdown."""
    report = {
        "sequences": len(gts_by_seq),
        "gt_tracks": sum(len(g) for g in gts_by_seq),
        "AP@0.5": video_ap(preds_by_seq, gts_by_seq, 0.5),
        "AP@all": ap_at_all(preds_by_seq, gts_by_seq),
        "imageAP@0.5": image_ap(preds_by_seq, gts_by_seq, 0.5),
        "imageAP@all": image_ap_at_all(preds_by_seq, gts_by_seq),
        "per_sequence": [],
    }
    names = sequence_names or [f"seq_{i:05d}" for i in range(len(gts_by_seq))]
    for name, preds, gts in zip(names, preds_by_seq, gts_by_seq):
        report["per_sequence"].append({
            "name": name,
            "AP@0.5": video_ap([preds], [gts], 0.5),
            "AP@all": ap_at_all([preds], [gts]),
        })
    return report


def format_report(report: dict) -> str:
    lines = ["trackseg-eval 1",
             f"sequences {report['sequences']}",
             f"gt_tracks {report['gt_tracks']}"]
    for key in ("AP@0.5", "AP@all", "imageAP@0.5", "imageAP@all"):
        value = report[key]
        lines.append(f"{key} {'absent' if value is None else repr(float(value))}")
    for row in report["per_sequence"]:
        a, b = row["AP@0.5"], row["AP@all"]
        lines.append(f"seq {row['name']} AP@0.5 {'absent' if a is None else repr(float(a))} "
                     f"AP@all {'absent' if b is None else repr(float(b))}")
    return "\n".join(lines) + "\n"
