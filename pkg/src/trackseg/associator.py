"""Inference-time tracking: score filtering + Hungarian over a trajectory bank.

Each frame, tokens above the score threshold are matched against existing
trajectories by maximum embedding similarity (dot product over each
trajectory's stored history). The similarity matrix is padded with
false-alarm rows of constant value; a token won by a false-alarm row opens
a new trajectory. Maximising total similarity under the bipartite
constraint is what lets two near-identical tokens land in two different
trajectories instead of piling onto one.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .evalkit import TrackPrediction
from .synthgen.dataset_io import DatasetError, rle_decode, rle_encode
from .train.matching import hungarian


@dataclass
class AssocConfig:
    score_threshold: float = 0.6    # tokens at or below are dropped
    match_threshold: float = 0.2    # false-alarm similarity, scale [-1, 1]
    false_alarm_slots: int = 0      # 0 -> one per surviving token

    def validate(self) -> "AssocConfig":
        if not 0.0 < self.score_threshold < 1.0:
            raise ValueError("score_threshold must lie in (0, 1)")
        if not -1.0 < self.match_threshold < 1.0:
            raise ValueError("match_threshold must lie in (-1, 1)")
        return self


@dataclass
class TokenRecord:
    frame: int
    score: float
    embedding: np.ndarray           # unit-norm [C_r]
    mask: np.ndarray | None = None  # bool [H, W]


@dataclass
class Trajectory:
    trajectory_id: int
    tokens: list = field(default_factory=list)

    def append(self, token: TokenRecord):
        if self.tokens and token.frame <= self.tokens[-1].frame:
            raise ValueError(f"trajectory {self.trajectory_id}: frame {token.frame} not increasing")
        self.tokens.append(token)

    def embedding_matrix(self) -> np.ndarray:
        return np.stack([t.embedding for t in self.tokens])


class TrajectoryBank:
    """Live trajectories; ids are never reused within a sequence."""

    def __init__(self):
        self.trajectories: list[Trajectory] = []
        self.next_id = 0

    def open(self, token: TokenRecord) -> Trajectory:
        traj = Trajectory(trajectory_id=self.next_id)
        self.next_id += 1
        traj.append(token)
        self.trajectories.append(traj)
        return traj

    def __len__(self):
        return len(self.trajectories)


def similarity(token_embedding: np.ndarray, trajectory: Trajectory) -> float:
    """Best dot product against the trajectory's stored embeddings."""
    if not trajectory.tokens:
        raise ValueError("similarity against an empty trajectory")
    return float((trajectory.embedding_matrix() @ np.asarray(token_embedding)).max())


def associate_one_frame(bank: TrajectoryBank, frame_tokens, config: AssocConfig) -> TrajectoryBank:
    """Filter by score, Hungarian-match survivors, append or open trajectories."""
    survivors = [t for t in frame_tokens if t.score > config.score_threshold]
    if not survivors:
        return bank
    n_traj = len(bank)
    n_tok = len(survivors)
    n_fa = config.false_alarm_slots if config.false_alarm_slots > 0 else n_tok
    emb = np.stack([t.embedding for t in survivors])           # [n_tok, C_r]
    sim = np.full((n_traj + n_fa, n_tok), config.match_threshold, dtype=np.float64)
    for i, traj in enumerate(bank.trajectories):
        sim[i] = (traj.embedding_matrix() @ emb.T).max(axis=0)

    pairs = hungarian(-sim)  # maximize similarity
    fresh = []
    for row, col in pairs:
        if row < n_traj:
            bank.trajectories[row].append(survivors[col])
        else:
            fresh.append(col)
    for col in sorted(fresh):  # new ids issued in token order
        bank.open(survivors[col])
    return bank


def run_sequence(frame_tokens_by_frame, config: AssocConfig, n_frames: int | None = None):
    """Fold the associator over a sequence; emit one track per trajectory.

    Track confidence is the mean of member token scores; frames without a
    token get an empty mask.
    """
    config.validate()
    frame_tokens_by_frame = list(frame_tokens_by_frame)
    n_frames = n_frames if n_frames is not None else len(frame_tokens_by_frame)
    bank = TrajectoryBank()
    for tokens in frame_tokens_by_frame:
        associate_one_frame(bank, tokens, config)
    tracks = []
    for traj in bank.trajectories:
        masks = [None] * n_frames
        for token in traj.tokens:
            masks[token.frame] = token.mask
        score = float(np.mean([t.score for t in traj.tokens]))
        tracks.append(TrackPrediction(track_id=traj.trajectory_id, score=score, masks=masks))
    return tracks, bank


def tokens_from_prediction(pred, frame_index: int) -> list[TokenRecord]:
    """Adapt one frame's model outputs into associator token records."""
    scores = pred.scores.values if hasattr(pred.scores, "values") else np.asarray(pred.scores)
    embeds = pred.embeddings.values if hasattr(pred.embeddings, "values") else np.asarray(pred.embeddings)
    masks = pred.masks
    return [TokenRecord(frame=frame_index, score=float(scores[i]), embedding=embeds[i],
                        mask=None if masks is None else masks[i])
            for i in range(scores.shape[0])]


# -- track files -------------------------------------------------------------


def write_tracks(tracks, n_frames: int, height: int, width: int, path: str):
    lines = ["trackseg-tracks 1", f"frames {n_frames}", f"size {height} {width}"]
    for tr in tracks:
        lines.append(f"track {tr.track_id} {repr(float(tr.score))}")
        for t, mask in enumerate(tr.masks):
            if mask is not None and mask.any():
                counts = " ".join(str(c) for c in rle_encode(mask))
                lines.append(f"mask {t} {counts}")
    lines.append("end")
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_tracks(path: str):
    """Returns (tracks, n_frames, height, width)."""
    if not os.path.isfile(path):
        raise DatasetError(f"{path}: no such track file")
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("trackseg-tracks "):
        raise DatasetError(f"{path}: not a trackseg track file")
    n_frames = height = width = None
    tracks: list[TrackPrediction] = []
    current = None
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "frames":
            n_frames = int(parts[1])
        elif parts[0] == "size":
            height, width = int(parts[1]), int(parts[2])
        elif parts[0] == "track":
            current = TrackPrediction(track_id=int(parts[1]), score=float(parts[2]),
                                      masks=[None] * n_frames)
            tracks.append(current)
        elif parts[0] == "mask":
            if current is None:
                raise DatasetError(f"{path}: mask record before any track record")
            t = int(parts[1])
            runs = [int(p) for p in parts[2:]]
            current.masks[t] = rle_decode(runs, height, width,
                                          context=f"{path} track {current.track_id} frame {t}")
        elif parts[0] == "end":
            break
        else:
            raise DatasetError(f"{path}: unknown record {parts[0]!r}")
    if n_frames is None or height is None:
        raise DatasetError(f"{path}: incomplete header")
    return tracks, n_frames, height, width
