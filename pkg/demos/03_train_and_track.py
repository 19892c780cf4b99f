"""Train a small model, then segment and track a held-out sequence.

A fast, scaled-down version of the full experiment (the real run uses the
CLI: gen -> train -> infer -> eval). Takes a couple of minutes on a laptop.

Run:  python3 demos/03_train_and_track.py [out_dir]
"""

import os
import sys

import numpy as np

from trackseg.associator import AssocConfig, run_sequence, tokens_from_prediction
from trackseg.model import ModelConfig, SegTrackNet
from trackseg.synthgen import GenConfig, generate_sequence
from trackseg.train import TrainConfig, train_loop
from trackseg.viz import save_overlay
from trackseg import evalkit

out_dir = sys.argv[1] if len(sys.argv) > 1 else "/tmp/trackseg_demo_run"
os.makedirs(out_dir, exist_ok=True)

gen_cfg = GenConfig(mode="tabletop", frames=4, max_objects=3, height=48, width=48,
                    scale_min=0.3, scale_max=0.5)
train_seqs = [generate_sequence(gen_cfg, s) for s in range(40)]
held = generate_sequence(gen_cfg, 9999)
print(f"dataset: {len(train_seqs)} training sequences, 1 held out")

model_cfg = ModelConfig(blocks=3, queries=12, token_width=48, feature_channels=48,
                        embed_width=16, track_width=16, downsample=4, ffn_width=128)
train_cfg = TrainConfig(seed=0, iterations=400, batch_size=4, frames_per_sample=2,
                        learning_rate=4e-4, decay_step=350, checkpoint_every=0, log_every=50)

model, rows = train_loop(train_seqs, model_cfg, train_cfg,
                         progress=lambda r: print(f"  step {r['step']:>4d} total {r['total']:.3f}"))
print(f"final loss {rows[-1]['total']:.3f}")

images = [np.ascontiguousarray(f.image.transpose(2, 0, 1)) for f in held.frames]
preds = model.forward_sequence(images)
frame_tokens = [tokens_from_prediction(p, t) for t, p in enumerate(preds)]
tracks, bank = run_sequence(frame_tokens, AssocConfig(), n_frames=len(images))
print(f"\nheld-out sequence: {len(tracks)} trajectories")
for tr in tracks:
    visible = [t for t, m in enumerate(tr.masks) if m is not None]
    print(f"  track {tr.track_id}: score {tr.score:.2f}, visible in frames {visible}")

gts = evalkit.gt_tracks_from_sequence(held)
print("\nscores on this sequence:")
for name, value in (("AP@0.5", evalkit.video_ap([tracks], [gts], 0.5)),
                    ("AP@all", evalkit.ap_at_all([tracks], [gts])),
                    ("imageAP@0.5", evalkit.image_ap([tracks], [gts], 0.5))):
    print(f"  {name:<12} {value:.3f}")

for t, frame in enumerate(held.frames):
    save_overlay(os.path.join(out_dir, f"overlay_{t:03d}.png"), frame.image, tracks, t)
print(f"\noverlays -> {out_dir}")
