"""Associator tests: similarity, exhaustive matching oracle, sequence folding."""

import itertools

import numpy as np
import pytest

from trackseg.associator import (
    AssocConfig,
    TokenRecord,
    Trajectory,
    TrajectoryBank,
    associate_one_frame,
    read_tracks,
    run_sequence,
    similarity,
    write_tracks,
)


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def token(frame, score, embedding, mask=None):
    return TokenRecord(frame=frame, score=score, embedding=unit(embedding), mask=mask)


def bank_with(embeddings_per_traj):
    bank = TrajectoryBank()
    for frame_embs in embeddings_per_traj:
        traj = bank.open(token(0, 0.9, frame_embs[0]))
        for t, e in enumerate(frame_embs[1:], start=1):
            traj.append(token(t, 0.9, e))
    return bank


class TestSimilarity:
    def test_identical_stored_token_gives_one(self):
        traj = Trajectory(0)
        traj.append(token(0, 0.9, [1.0, 2.0, 2.0]))
        assert similarity(unit([1.0, 2.0, 2.0]), traj) == pytest.approx(1.0)

    def test_orthogonal_gives_zero(self):
        traj = Trajectory(0)
        traj.append(token(0, 0.9, [1.0, 0.0]))
        assert similarity(unit([0.0, 1.0]), traj) == pytest.approx(0.0)

    def test_max_over_history(self):
        # stored embeddings with dots {0.3, 0.9, -0.2} against the probe
        probe = np.array([1.0, 0.0, 0.0])
        traj = Trajectory(0)
        for d in (0.3, 0.9, -0.2):
            emb = np.array([d, np.sqrt(1 - d * d), 0.0])
            traj.append(token(len(traj.tokens), 0.9, emb))
        assert similarity(probe, traj) == pytest.approx(0.9)

    def test_empty_trajectory_is_usage_error(self):
        with pytest.raises(ValueError, match="empty"):
            similarity(np.array([1.0, 0.0]), Trajectory(0))


def exhaustive_best(sim, delta_match):
    """Max total value over injective token->trajectory-or-new assignments.

    Enumerates every subset of tokens sent to real trajectories and every
    injective placement of that subset; unassigned tokens are worth the
    false-alarm value.
    """
    n_traj, n_tok = sim.shape
    best = -np.inf
    for r in range(0, min(n_traj, n_tok) + 1):
        for token_subset in itertools.combinations(range(n_tok), r):
            for traj_perm in itertools.permutations(range(n_traj), r):
                total = (n_tok - r) * delta_match
                total += sum(sim[i, j] for i, j in zip(traj_perm, token_subset))
                best = max(best, total)
    return best


def achieved_total(bank_before_sizes, bank, survivors, sim, delta_match):
    """Total similarity realized by the bank update."""
    total = 0.0
    for traj_idx, traj in enumerate(bank.trajectories):
        if traj_idx < len(bank_before_sizes):
            if len(traj.tokens) > bank_before_sizes[traj_idx]:
                tok = traj.tokens[-1]
                col = next(j for j, s in enumerate(survivors) if s is tok)
                total += sim[traj_idx, col]
        else:
            total += delta_match
    return total


class TestAssociateOneFrame:
    def test_empty_bank_opens_tracks(self):
        bank = TrajectoryBank()
        toks = [token(0, 0.9, [1, 0, 0]), token(0, 0.8, [0, 1, 0])]
        associate_one_frame(bank, toks, AssocConfig())
        assert len(bank) == 2
        assert [t.trajectory_id for t in bank.trajectories] == [0, 1]

    def test_score_filter_strict(self):
        bank = TrajectoryBank()
        toks = [token(0, 0.6, [1, 0]), token(0, 0.61, [0, 1])]
        associate_one_frame(bank, toks, AssocConfig(score_threshold=0.6))
        assert len(bank) == 1  # score == threshold is dropped

    def test_raising_threshold_never_adds_survivors(self):
        rng = np.random.default_rng(0)
        scores = rng.random(12)
        counts = []
        for thr in (0.2, 0.5, 0.8):
            bank = TrajectoryBank()
            toks = [token(0, float(s), rng.normal(size=3)) for s in scores]
            associate_one_frame(bank, toks, AssocConfig(score_threshold=thr))
            counts.append(len(bank))
        assert counts[0] >= counts[1] >= counts[2]

    def test_clear_winner_appends(self):
        bank = bank_with([[[1, 0, 0]], [[0, 1, 0]]])
        tok = token(1, 0.9, [0.95, 0.3, 0.0])  # sim ~0.95 to A, ~0.3 to B
        associate_one_frame(bank, [tok], AssocConfig(match_threshold=0.2))
        assert len(bank) == 2
        assert len(bank.trajectories[0].tokens) == 2
        assert len(bank.trajectories[1].tokens) == 1

    def test_low_similarity_opens_new_track(self):
        bank = bank_with([[[1, 0, 0]]])
        tok = token(1, 0.9, [0.1, np.sqrt(1 - 0.01), 0.0])  # sim 0.1 < delta 0.2
        associate_one_frame(bank, [tok], AssocConfig(match_threshold=0.2))
        assert len(bank) == 2
        assert len(bank.trajectories[0].tokens) == 1

    def test_matches_exhaustive_optimum_random(self):
        rng = np.random.default_rng(1)
        for trial in range(250):
            n_traj = int(rng.integers(0, 7))
            n_tok = int(rng.integers(1, 7))
            delta = float(rng.uniform(-0.5, 0.5))
            bank = TrajectoryBank()
            for i in range(n_traj):
                bank.open(token(0, 0.9, rng.normal(size=4)))
            sizes = [len(t.tokens) for t in bank.trajectories]
            survivors = [token(1, 0.9, rng.normal(size=4)) for _ in range(n_tok)]
            sim = np.full((n_traj, n_tok), delta)
            for i, traj in enumerate(bank.trajectories):
                for j, tok in enumerate(survivors):
                    sim[i, j] = similarity(tok.embedding, traj)
            associate_one_frame(bank, survivors, AssocConfig(match_threshold=delta))
            got = achieved_total(sizes, bank, survivors, sim, delta)
            best = exhaustive_best(sim, delta)
            assert got == pytest.approx(best, abs=1e-9), f"trial {trial}"

    def test_identical_embeddings_stay_injective(self):
        emb = [0.0, 1.0, 0.0]
        bank = bank_with([[emb], [emb]])
        toks = [token(1, 0.9, emb), token(1, 0.9, emb)]
        associate_one_frame(bank, toks, AssocConfig())
        assert len(bank) == 2  # no new trajectories
        assert all(len(t.tokens) == 2 for t in bank.trajectories)

    def test_empty_frame_is_noop(self):
        bank = bank_with([[[1, 0]]])
        associate_one_frame(bank, [], AssocConfig())
        assert len(bank) == 1 and len(bank.trajectories[0].tokens) == 1


class TestRunSequence:
    def mask(self, k):
        m = np.zeros((8, 8), dtype=bool)
        m[k : k + 2, k : k + 2] = True
        return m

    def test_single_frame_one_track_per_survivor(self):
        toks = [[token(0, 0.9, [1, 0], self.mask(0)), token(0, 0.1, [0, 1], self.mask(2))]]
        tracks, bank = run_sequence(toks, AssocConfig(), n_frames=1)
        assert len(tracks) == 1
        assert tracks[0].score == pytest.approx(0.9)

    def test_two_frames_distinctive_embeddings_no_spurious_tracks(self):
        frame = [token(0, 0.9, [1, 0, 0], self.mask(0)), token(0, 0.8, [0, 1, 0], self.mask(3))]
        frame2 = [token(1, 0.9, [1, 0, 0], self.mask(1)), token(1, 0.8, [0, 1, 0], self.mask(4))]
        tracks, _ = run_sequence([frame, frame2], AssocConfig(), n_frames=2)
        assert len(tracks) == 2
        assert all(sum(m is not None for m in t.masks) == 2 for t in tracks)

    def test_gap_leaves_empty_mask_then_continues(self):
        a = token(0, 0.9, [1, 0], self.mask(0))
        c = token(2, 0.9, [1, 0], self.mask(2))
        tracks, _ = run_sequence([[a], [], [c]], AssocConfig(), n_frames=3)
        assert len(tracks) == 1
        assert tracks[0].masks[0] is not None
        assert tracks[0].masks[1] is None
        assert tracks[0].masks[2] is not None

    def test_track_score_is_mean(self):
        a = token(0, 0.7, [1, 0], self.mask(0))
        b = token(1, 0.9, [1, 0], self.mask(1))
        tracks, _ = run_sequence([[a], [b]], AssocConfig(), n_frames=2)
        assert tracks[0].score == pytest.approx(0.8)

    def test_ids_never_reused(self):
        frames = []
        rng = np.random.default_rng(2)
        for t in range(4):
            frames.append([token(t, 0.9, rng.normal(size=3), self.mask(t))
                           for _ in range(2)])
        _, bank = run_sequence(frames, AssocConfig(), n_frames=4)
        ids = [t.trajectory_id for t in bank.trajectories]
        assert len(set(ids)) == len(ids)


class TestTrackFiles:
    def test_round_trip(self, tmp_path):
        m = np.zeros((6, 6), dtype=bool)
        m[1:4, 2:5] = True
        toks = [[token(0, 0.875, [1, 0], m)], [token(1, 0.625, [1, 0], m)]]
        tracks, _ = run_sequence(toks, AssocConfig(score_threshold=0.5), n_frames=2)
        path = str(tmp_path / "tracks.txt")
        write_tracks(tracks, 2, 6, 6, path)
        loaded, n, h, w = read_tracks(path)
        assert (n, h, w) == (2, 6, 6)
        assert len(loaded) == len(tracks) == 1
        assert loaded[0].score == tracks[0].score
        assert np.array_equal(loaded[0].masks[0], tracks[0].masks[0])

    def test_missing_file_raises(self, tmp_path):
        from trackseg.synthgen import DatasetError

        with pytest.raises(DatasetError):
            read_tracks(str(tmp_path / "absent.txt"))


class TestConfigValidation:
    def test_score_threshold_bounds(self):
        with pytest.raises(ValueError):
            AssocConfig(score_threshold=1.5).validate()

    def test_match_threshold_bounds(self):
        with pytest.raises(ValueError):
            AssocConfig(match_threshold=-1.0).validate()
