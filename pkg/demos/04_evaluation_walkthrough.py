"""How the video-AP evaluator scores tracking mistakes.

Builds tiny hand-made track scenarios and walks through sequence-level IoU,
greedy matching, and the PR curve behind AP.

Run:  python3 demos/04_evaluation_walkthrough.py
"""

import numpy as np

from trackseg import evalkit
from trackseg.evalkit import GroundTruthTrack, TrackPrediction


def strip(c0, c1, width=60):
    m = np.zeros((1, width), dtype=bool)
    m[0, c0:c1] = True
    return m


a, b = strip(0, 10), strip(30, 40)

print("== sequence-level IoU sums over frames ==")
gt = GroundTruthTrack(object_id=0, masks=[a, a])
exact = TrackPrediction(track_id=0, score=0.9, masks=[a, a])
late = TrackPrediction(track_id=1, score=0.9, masks=[a, None])
print("perfect track:       ", evalkit.sequence_iou(exact, gt))
print("missing frame 2:     ", evalkit.sequence_iou(late, gt))

print("\n== identity swaps ruin video AP but not image AP ==")
gts = [[GroundTruthTrack(0, [a, a]), GroundTruthTrack(1, [b, b])]]
swapped = [[TrackPrediction(0, 0.9, [a, b]), TrackPrediction(1, 0.8, [b, a])]]
print("video AP@0.5:", evalkit.video_ap(swapped, gts, 0.5))
print("image AP@0.5:", evalkit.image_ap(swapped, gts, 0.5))

print("\n== confidence ordering matters ==")
gts1 = [[GroundTruthTrack(0, [a])]]
fp_first = [[TrackPrediction(0, 0.9, [b]), TrackPrediction(1, 0.5, [a])]]
tp_first = [[TrackPrediction(0, 0.9, [a]), TrackPrediction(1, 0.5, [b])]]
print("false positive outranks the hit:", evalkit.video_ap(fp_first, gts1, 0.5))
print("hit outranks the false positive:", evalkit.video_ap(tp_first, gts1, 0.5))

print("\n== the PR curve under the second case ==")
labels = evalkit.match_tracks(fp_first[0], gts1[0], 0.5)
curve = evalkit.build_pr_curve(labels, total_gt=1)
for r, p, thr in zip(curve.recalls, curve.precisions, curve.thresholds):
    print(f"  threshold {thr:.2f}: recall {r:.2f}, precision {p:.2f}")

print("\n== AP@all sweeps the IoU ladder ==")
partial = [[TrackPrediction(0, 0.9, [strip(2, 25)])]]   # IoU 18/25 = 0.72
gts2 = [[GroundTruthTrack(0, [strip(0, 20)])]]
for thr in (0.5, 0.7, 0.75):
    print(f"  AP@{thr}: {evalkit.video_ap(partial, gts2, thr)}")
print("AP@all:", evalkit.ap_at_all(partial, gts2))
