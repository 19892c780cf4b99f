"""CLI tests: subcommand contracts, determinism, override precedence."""

import filecmp
import os

import numpy as np
import pytest
from PIL import Image

from trackseg.cli import main

TINY_MODEL = [
    "--set", "model.blocks=2", "--set", "model.queries=8", "--set", "model.token_width=16",
    "--set", "model.feature_channels=16", "--set", "model.embed_width=8",
    "--set", "model.track_width=8", "--set", "model.downsample=4", "--set", "model.heads=2",
    "--set", "model.ffn_width=32",
]
TINY_GEN = ["--set", "gen.frames=4", "--set", "gen.height=32", "--set", "gen.width=32",
            "--set", "gen.max_objects=4"]


def trees_equal(a, b):
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.diff_files:
        return False
    return all(trees_equal(os.path.join(a, d), os.path.join(b, d)) for d in cmp.common_dirs)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One generated dataset + one tiny training run shared by the module."""
    root = tmp_path_factory.mktemp("cliws")
    data = str(root / "data")
    run = str(root / "run")
    assert main(["gen", "--mode", "tabletop", "--sequences", "3", "--seed", "5",
                 "--out", data, *TINY_GEN]) == 0
    assert main(["train", "--data", data, "--out", run, "--seed", "1",
                 "--set", "train.iterations=3", "--set", "train.batch_size=2",
                 "--set", "train.checkpoint_every=2", *TINY_MODEL]) == 0
    return {"root": root, "data": data, "run": run,
            "ckpt": os.path.join(run, "checkpoint_final.ckpt")}


class TestGen:
    def test_deterministic_trees(self, tmp_path):
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        for out in (a, b):
            assert main(["gen", "--mode", "tabletop", "--sequences", "2", "--seed", "7",
                         "--out", out, *TINY_GEN]) == 0
        assert trees_equal(a, b)

    def test_shelf_sequences_have_at_least_two_frames(self, tmp_path):
        out = str(tmp_path / "shelf")
        assert main(["gen", "--mode", "shelf", "--sequences", "2", "--seed", "3",
                     "--out", out]) == 0
        from trackseg.synthgen import read_dataset

        for seq in read_dataset(out):
            assert len(seq.frames) >= 2
            assert seq.mode == "shelf"

    def test_invalid_mode_usage_error_names_choices(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["gen", "--mode", "conveyor", "--out", str(tmp_path / "x")])
        assert exc.value.code == 2
        err = capsys.readouterr().err
        assert "shelf" in err and "tabletop" in err

    def test_dataset_manifest_records_config_and_seed(self, workspace):
        text = open(os.path.join(workspace["data"], "dataset.txt")).read()
        assert "seed 5" in text
        assert "config mode tabletop" in text
        assert "sequence seq_00000" in text

    def test_worker_count_does_not_change_output(self, tmp_path, monkeypatch):
        a, b = str(tmp_path / "w1"), str(tmp_path / "w2")
        monkeypatch.setenv("TRACKSEG_WORKERS", "1")
        main(["gen", "--mode", "tabletop", "--sequences", "2", "--seed", "9", "--out", a, *TINY_GEN])
        monkeypatch.setenv("TRACKSEG_WORKERS", "2")
        main(["gen", "--mode", "tabletop", "--sequences", "2", "--seed", "9", "--out", b, *TINY_GEN])
        assert trees_equal(a, b)


class TestTrain:
    def test_writes_checkpoints_and_log(self, workspace):
        run = workspace["run"]
        assert os.path.isfile(os.path.join(run, "checkpoint_final.ckpt"))
        assert os.path.isfile(os.path.join(run, "checkpoint_000002.ckpt"))
        assert os.path.isfile(os.path.join(run, "metrics.log"))
        assert os.path.isfile(os.path.join(run, "train_config.txt"))

    def test_checkpoint_loads_with_embedded_config(self, workspace):
        from trackseg.model import load_checkpoint

        model, extras = load_checkpoint(workspace["ckpt"])
        assert model.config.blocks == 2
        assert extras["opt.step"][0] == 3.0

    def test_resume_continues_counter(self, workspace, tmp_path):
        out = str(tmp_path / "resumed")
        assert main(["train", "--data", workspace["data"], "--out", out,
                     "--checkpoint", workspace["ckpt"],
                     "--set", "train.iterations=5", "--set", "train.batch_size=2",
                     "--set", "train.checkpoint_every=0", "--seed", "1"]) == 0
        from trackseg.model import load_checkpoint

        _, extras = load_checkpoint(os.path.join(out, "checkpoint_final.ckpt"))
        assert extras["opt.step"][0] == 5.0

    def test_corrupt_checkpoint_is_clean_error(self, workspace, tmp_path):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"GARBAGE!" + b"\x00" * 32)
        with pytest.raises(SystemExit) as exc:
            main(["train", "--data", workspace["data"], "--out", str(tmp_path / "o"),
                  "--checkpoint", str(bad)])
        assert "magic" in str(exc.value)

    def test_config_file_vs_set_precedence(self, workspace, tmp_path):
        cfg = tmp_path / "conf.txt"
        cfg.write_text("train.iterations=2\ntrain.batch_size=1\ntrain.checkpoint_every=0\n")
        out = str(tmp_path / "prec")
        assert main(["train", "--data", workspace["data"], "--out", out, "--seed", "0",
                     "--config", str(cfg), "--set", "train.iterations=1", *TINY_MODEL]) == 0
        lines = open(os.path.join(out, "metrics.log")).read().splitlines()
        assert lines[-1].split()[0] == "1"  # --set beat the file value
        text = open(os.path.join(out, "train_config.txt")).read()
        assert "iterations=1" in text and "batch_size=1" in text

    def test_unknown_key_rejected(self, workspace, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--data", workspace["data"], "--out", str(tmp_path / "o"),
                  "--set", "train.momentum=0.9"])
        assert "unknown key" in str(exc.value)


class TestInfer:
    def test_writes_tracks_and_overlays(self, workspace, tmp_path):
        out = str(tmp_path / "tracks")
        assert main(["infer", "--data", workspace["data"], "--checkpoint", workspace["ckpt"],
                     "--out", out]) == 0
        seq_out = os.path.join(out, "seq_00000")
        assert os.path.isfile(os.path.join(seq_out, "tracks.txt"))
        for t in range(4):
            png = os.path.join(seq_out, f"overlay_{t:03d}.png")
            assert os.path.isfile(png)
            assert Image.open(png).size == (32, 32)

    def test_deterministic(self, workspace, tmp_path):
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        for out in (a, b):
            assert main(["infer", "--data", workspace["data"], "--checkpoint",
                         workspace["ckpt"], "--out", out]) == 0
        assert trees_equal(a, b)

    def test_resolution_mismatch_is_descriptive(self, workspace, tmp_path):
        other = str(tmp_path / "odd")
        main(["gen", "--mode", "tabletop", "--sequences", "1", "--seed", "2", "--out", other,
              "--set", "gen.height=34", "--set", "gen.width=34", "--set", "gen.frames=2"])
        with pytest.raises(SystemExit) as exc:
            main(["infer", "--data", other, "--checkpoint", workspace["ckpt"],
                  "--out", str(tmp_path / "t")])
        assert "divisible" in str(exc.value)


class TestEval:
    def gt_as_tracks(self, data_dir, out_dir):
        """Convert ground truth into prediction track files."""
        from trackseg import evalkit
        from trackseg.associator import write_tracks
        from trackseg.evalkit import TrackPrediction
        from trackseg.synthgen import read_dataset

        names = sorted(n for n in os.listdir(data_dir) if n.startswith("seq_"))
        for name, seq in zip(names, read_dataset(data_dir)):
            gts = evalkit.gt_tracks_from_sequence(seq)
            tracks = [TrackPrediction(track_id=i, score=0.9, masks=list(g.masks))
                      for i, g in enumerate(gts)]
            h, w = seq.frames[0].image.shape[:2]
            write_tracks(tracks, len(seq.frames), h, w,
                         os.path.join(out_dir, name, "tracks.txt"))

    def test_gt_against_itself_is_perfect(self, workspace, tmp_path, capsys):
        tracks = str(tmp_path / "gt_tracks")
        self.gt_as_tracks(workspace["data"], tracks)
        assert main(["eval", "--data", workspace["data"], "--tracks", tracks,
                     "--out", str(tmp_path / "report.txt")]) == 0
        out = capsys.readouterr().out
        fields = dict(ln.split()[0:2] for ln in out.splitlines() if ln and not ln.startswith("seq "))
        assert float(fields["AP@all"]) == 1.0
        assert float(fields["AP@0.5"]) == 1.0

    def test_empty_predictions_score_zero(self, workspace, tmp_path, capsys):
        empty = str(tmp_path / "none")
        os.makedirs(empty)
        assert main(["eval", "--data", workspace["data"], "--tracks", empty]) == 0
        out = capsys.readouterr().out
        fields = dict(ln.split()[0:2] for ln in out.splitlines() if ln and not ln.startswith("seq "))
        assert float(fields["AP@all"]) == 0.0

    def test_report_fields_parse_in_unit_interval(self, workspace, tmp_path, capsys):
        tracks = str(tmp_path / "gt_tracks2")
        self.gt_as_tracks(workspace["data"], tracks)
        main(["eval", "--data", workspace["data"], "--tracks", tracks])
        out = capsys.readouterr().out
        for ln in out.splitlines():
            parts = ln.split()
            if parts and parts[0] in ("AP@0.5", "AP@all", "imageAP@0.5", "imageAP@all"):
                assert 0.0 <= float(parts[1]) <= 1.0

    def test_eval_deterministic_report(self, workspace, tmp_path):
        tracks = str(tmp_path / "gt_tracks3")
        self.gt_as_tracks(workspace["data"], tracks)
        r1, r2 = str(tmp_path / "r1.txt"), str(tmp_path / "r2.txt")
        main(["eval", "--data", workspace["data"], "--tracks", tracks, "--out", r1])
        main(["eval", "--data", workspace["data"], "--tracks", tracks, "--out", r2])
        assert open(r1).read() == open(r2).read()


class TestOverlays:
    def test_trajectory_color_stable_across_frames(self):
        from trackseg.viz import track_color

        c1, c2 = track_color(3), track_color(3)
        assert np.array_equal(c1, c2)
        assert not np.array_equal(track_color(3), track_color(4))

    def test_new_object_appears_in_later_overlay(self, workspace, tmp_path):
        # craft tokens directly: a second trajectory starts at frame 1
        from trackseg.associator import AssocConfig, TokenRecord, run_sequence
        from trackseg.viz import render_overlay, track_color

        m1 = np.zeros((16, 16), dtype=bool)
        m1[2:6, 2:6] = True
        m2 = np.zeros((16, 16), dtype=bool)
        m2[10:14, 10:14] = True
        e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        frames = [
            [TokenRecord(0, 0.9, e1, m1)],
            [TokenRecord(1, 0.9, e1, m1), TokenRecord(1, 0.9, e2, m2)],
        ]
        tracks, _ = run_sequence(frames, AssocConfig(), n_frames=2)
        assert len(tracks) == 2
        img = np.full((16, 16, 3), 0.5, dtype=np.float32)
        ov0 = render_overlay(img, tracks, 0)
        ov1 = render_overlay(img, tracks, 1)
        color2 = np.round((0.45 * 0.5 + 0.55 * track_color(1)) * 255).astype(np.uint8)
        spot = ov1[13, 13]  # inside the new track's mask, clear of the digit stamp
        assert np.all(np.abs(spot.astype(int) - color2.astype(int)) <= 1)
        assert np.array_equal(ov0[13, 13], np.round(np.full(3, 0.5 * 255)).astype(np.uint8))
