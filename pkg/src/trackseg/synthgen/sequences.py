"""Deterministic sequence simulation for the shelf and tabletop protocols.

Shelf: 3-5 elongated rectangles packed side by side with heavy overlap;
between frames objects may flip (rotate by pi) or relocate, and a new object
may arrive. Tabletop: objects appear incrementally through a cutoff frame
while everything keeps shuffling; full occlusion can transiently hide an
object which later reappears under the same id.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .shapes import FrameRecord, ObjectInstance, ShapeSpec, make_background, rasterize_frame


class GenerationError(RuntimeError):
    pass


@dataclass
class GenConfig:
    mode: str = "tabletop"
    height: int = 64
    width: int = 64
    frames: int = 0                  # 0 -> per-mode default (tabletop 15, shelf 2)
    min_objects: int = 3
    max_objects: int = 5
    new_object_cutoff: int = 0       # 0 -> round(frames * 10 / 15) for tabletop
    new_object_prob: float = 0.9
    move_prob: float = 0.9
    flip_prob: float = 0.25
    rotate_prob: float = 0.6
    occlusion_prob: float = 0.2
    scale_min: float = 0.18
    scale_max: float = 0.38
    texture_amplitude: float = 0.08
    identical_prob: float = 0.0      # new object copies an existing outline+color
    max_retries: int = 50

    def resolved(self) -> "GenConfig":
        cfg = GenConfig(**asdict(self))
        if cfg.mode not in ("shelf", "tabletop"):
            raise ValueError(f"unknown mode {cfg.mode!r}: valid modes are shelf, tabletop")
        if cfg.frames <= 0:
            cfg.frames = 15 if cfg.mode == "tabletop" else 2
        if cfg.new_object_cutoff <= 0:
            cfg.new_object_cutoff = max(1, round(cfg.frames * 10 / 15))
        if min(cfg.height, cfg.width) < 32:
            raise ValueError("canvas extents must be at least 32")
        if cfg.mode == "shelf" and cfg.frames < 2:
            raise ValueError("shelf sequences need at least 2 frames")
        if not 1 <= cfg.min_objects <= cfg.max_objects:
            raise ValueError("invalid object-count band")
        if not 0.0 < cfg.scale_min <= cfg.scale_max <= 0.95:
            raise ValueError("invalid scale band")
        return cfg


@dataclass
class SequenceRecord:
    frames: list
    seed: int
    mode: str
    config: dict = field(default_factory=dict)

    def __eq__(self, other):
        return (
            isinstance(other, SequenceRecord)
            and self.seed == other.seed
            and self.mode == other.mode
            and self.config == other.config
            and self.frames == other.frames
        )


def config_from_dict(d: dict) -> GenConfig:
    known = {f.name: f.type for f in fields(GenConfig)}
    kwargs = {}
    for key, value in d.items():
        if key not in known:
            raise ValueError(f"unknown generator config key {key!r}")
        kwargs[key] = value
    return GenConfig(**kwargs)


def _random_color(rng):
    # keep colors saturated and away from the gray background
    c = rng.uniform(0.1, 1.0, size=3)
    c[int(rng.integers(3))] = rng.uniform(0.65, 1.0)
    return tuple(float(v) for v in np.round(c, 4))


def _polygon(rng, n_vertices):
    base = np.linspace(0.0, 2.0 * math.pi, n_vertices, endpoint=False)
    angles = base + rng.uniform(-0.28, 0.28, size=n_vertices) * (2.0 * math.pi / n_vertices)
    sx, sy = rng.uniform(0.55, 1.0, size=2)
    verts = tuple((float(np.cos(a) * sx), float(np.sin(a) * sy)) for a in angles)
    return ("polygon", verts)


def _tabletop_outline(rng):
    if rng.random() < 0.5:
        return ("ellipse", (1.0, float(rng.uniform(0.5, 1.0))))
    return _polygon(rng, int(rng.integers(3, 9)))


def _shelf_outline(rng):
    # elongated spine: narrow in x, tall in y
    wx = float(rng.uniform(0.18, 0.4))
    return ("polygon", ((-wx, -1.0), (wx, -1.0), (wx, 1.0), (-wx, 1.0)))


def _new_spec(cfg: GenConfig, rng, existing: list[ShapeSpec]) -> ShapeSpec:
    for _ in range(cfg.max_retries):
        if existing and rng.random() < cfg.identical_prob:
            donor = existing[int(rng.integers(len(existing)))]
            outline, color, scale = donor.outline, donor.color, donor.scale
        else:
            outline = _shelf_outline(rng) if cfg.mode == "shelf" else _tabletop_outline(rng)
            color = _random_color(rng)
            scale = float(rng.uniform(cfg.scale_min, cfg.scale_max))
        spec = ShapeSpec(outline=outline, color=color, texture_seed=int(rng.integers(2**31)),
                         texture_amplitude=cfg.texture_amplitude, scale=scale)
        if all(spec.identity_triple() != s.identity_triple() for s in existing):
            return spec
    raise GenerationError("could not draw a distinct object identity")


def _tabletop_place(cfg, rng, spec):
    r = spec.scale * min(cfg.height, cfg.width) / 2.0
    x = float(rng.uniform(r, cfg.width - r))
    y = float(rng.uniform(r, cfg.height - r))
    return x, y, float(rng.uniform(0.0, 2.0 * math.pi))


def _shelf_place(cfg, rng, slot, n_slots):
    pitch = cfg.width / n_slots
    x = (slot + 0.5) * pitch + float(rng.uniform(-0.15, 0.15)) * pitch
    y = cfg.height / 2.0 + float(rng.uniform(-0.05, 0.05)) * cfg.height
    return float(x), float(y)


_POSE_TAG = 0x505345   # rng stream tags: poses vs background
_BG_TAG = 0x424B47


def _snapshot(states: dict) -> list[ObjectInstance]:
    return [
        ObjectInstance(object_id=oid, shape=st["spec"], x=st["x"], y=st["y"],
                       rotation=st["rot"], z=st["z"], present=True)
        for oid, st in sorted(states.items())
    ]


def _all_visible(instances, cfg) -> bool:
    record = rasterize_frame(instances, cfg.height, cfg.width)
    return len(record.object_ids) == len(instances)


def _simulate_shelf(cfg: GenConfig, rng):
    specs: dict[int, ShapeSpec] = {}
    states: dict[int, dict] = {}
    n0 = int(rng.integers(cfg.min_objects, cfg.max_objects + 1))
    for attempt in range(cfg.max_retries + 1):
        specs.clear()
        states.clear()
        for oid in range(n0):
            spec = _new_spec(cfg, rng, list(specs.values()))
            specs[oid] = spec
            x, y = _shelf_place(cfg, rng, oid, n0)
            states[oid] = {"spec": spec, "x": x, "y": y,
                           "rot": float(rng.uniform(-0.12, 0.12)), "z": oid}
        if _all_visible(_snapshot(states), cfg):
            break
        if attempt == cfg.max_retries:
            raise GenerationError(f"could not place {n0} mutually visible shelf objects")

    frames = [_snapshot(states)]
    next_id = n0
    for _t in range(1, cfg.frames):
        for oid in sorted(states):
            st = states[oid]
            if rng.random() < cfg.flip_prob:
                st["rot"] += math.pi
            if rng.random() < cfg.move_prob:
                slot = int(rng.integers(len(states)))
                st["x"], st["y"] = _shelf_place(cfg, rng, slot, len(states))
        if len(states) < cfg.max_objects and rng.random() < cfg.new_object_prob:
            spec = _new_spec(cfg, rng, list(specs.values()))
            specs[next_id] = spec
            slot = int(rng.integers(len(states) + 1))
            x, y = _shelf_place(cfg, rng, slot, len(states) + 1)
            states[next_id] = {"spec": spec, "x": x, "y": y,
                               "rot": float(rng.uniform(-0.12, 0.12)),
                               "z": max(st["z"] for st in states.values()) + 1}
            next_id += 1
        frames.append(_snapshot(states))
    return frames, specs


def _simulate_tabletop(cfg: GenConfig, rng):
    specs: dict[int, ShapeSpec] = {}
    states: dict[int, dict] = {}
    n0 = min(2, cfg.max_objects)
    for attempt in range(cfg.max_retries + 1):
        specs.clear()
        states.clear()
        for oid in range(n0):
            spec = _new_spec(cfg, rng, list(specs.values()))
            specs[oid] = spec
            x, y, rot = _tabletop_place(cfg, rng, spec)
            states[oid] = {"spec": spec, "x": x, "y": y, "rot": rot, "z": oid}
        if _all_visible(_snapshot(states), cfg):
            break
        if attempt == cfg.max_retries:
            raise GenerationError(f"could not place {n0} mutually visible tabletop objects")

    frames = [_snapshot(states)]
    next_id = n0
    for t in range(1, cfg.frames):
        for oid in sorted(states):
            st = states[oid]
            if rng.random() < cfg.move_prob:
                st["x"], st["y"], _ = _tabletop_place(cfg, rng, st["spec"])
            if rng.random() < cfg.rotate_prob:
                st["rot"] += float(rng.uniform(-math.pi, math.pi))
            if rng.random() < cfg.flip_prob:
                st["rot"] += math.pi
        # restacking: fresh depth order every frame
        order = rng.permutation(sorted(states))
        for depth, oid in enumerate(order):
            states[int(oid)]["z"] = depth
        # occasionally force a full occlusion that can resolve next frame
        if 1 <= t <= cfg.frames - 2 and len(states) >= 2 and rng.random() < cfg.occlusion_prob:
            victim = min(states, key=lambda o: (states[o]["spec"].scale, o))
            covers = [o for o in sorted(states)
                      if o != victim and states[o]["spec"].scale >= states[victim]["spec"].scale * 1.25]
            if covers:
                cover = covers[int(rng.integers(len(covers)))]
                states[cover]["x"] = states[victim]["x"]
                states[cover]["y"] = states[victim]["y"]
                states[cover]["z"] = max(st["z"] for st in states.values()) + 1
        # arrivals land on top so a new id is visible the frame it enters
        if len(states) < cfg.max_objects and t < cfg.new_object_cutoff \
                and rng.random() < cfg.new_object_prob:
            spec = _new_spec(cfg, rng, list(specs.values()))
            specs[next_id] = spec
            x, y, rot = _tabletop_place(cfg, rng, spec)
            states[next_id] = {"spec": spec, "x": x, "y": y, "rot": rot,
                               "z": max(st["z"] for st in states.values()) + 1}
            next_id += 1
        frames.append(_snapshot(states))
    return frames, specs


def simulate_sequence(config: GenConfig, seed: int):
    """Pose bookkeeping only: (per-frame instance lists, id -> ShapeSpec).

    Deterministic in (config, seed); rasterization happens separately.
    """
    cfg = config.resolved()
    rng = np.random.default_rng([int(seed), _POSE_TAG])
    if cfg.mode == "shelf":
        return _simulate_shelf(cfg, rng)
    return _simulate_tabletop(cfg, rng)


def generate_sequence(config: GenConfig, seed: int) -> SequenceRecord:
    """Render a full deterministic sequence for (config, seed)."""
    cfg = config.resolved()
    frame_instances, _specs = simulate_sequence(cfg, seed)
    background = make_background(cfg.height, cfg.width, [int(seed), _BG_TAG])
    frames = [rasterize_frame(instances, cfg.height, cfg.width, background)
              for instances in frame_instances]
    return SequenceRecord(frames=frames, seed=int(seed), mode=cfg.mode, config=asdict(cfg))


def appearance_groups(specs: dict[int, ShapeSpec]) -> dict[int, int]:
    """Map object id -> representative id of its rendered-appearance class."""
    key_to_gid: dict = {}
    groups = {}
    for oid in sorted(specs):
        groups[oid] = key_to_gid.setdefault(specs[oid].appearance_key(), oid)
    return groups
