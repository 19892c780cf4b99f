"""2-D object shapes and z-ordered opaque rasterization.

Objects are ellipses or convex polygons with a flat base color plus a
deterministic per-object noise texture that rides along with the object's
pose, so an instance looks the same wherever it moves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TEXTURE_TILE = 64  # square noise tile sampled in object-local pixel units


@dataclass(frozen=True)
class ShapeSpec:
    """Geometry + appearance of one object identity.

    ``outline`` is ("ellipse", (a, b)) with unit half-axes, or
    ("polygon", ((x0, y0), ...)) with CCW vertices inside the unit disc.
    ``scale`` is the half-extent as a fraction of the short canvas side.
    """

    outline: tuple
    color: tuple
    texture_seed: int
    texture_amplitude: float
    scale: float

    def identity_triple(self):
        return (self.outline, self.color, self.texture_seed)

    def appearance_key(self):
        """Objects with equal keys render identically (up to pose)."""
        if self.texture_amplitude == 0.0:
            return (self.outline, self.color, self.scale)
        return (self.outline, self.color, self.scale, self.texture_seed, self.texture_amplitude)


@dataclass
class ObjectInstance:
    """Pose of one object in one frame."""

    object_id: int
    shape: ShapeSpec
    x: float
    y: float
    rotation: float
    z: int
    present: bool = True


@dataclass
class FrameRecord:
    """Rendered frame: image in [0,1] plus disjoint per-object masks."""

    image: np.ndarray                      # [H, W, 3] float32 on the 1/255 grid
    object_ids: list = field(default_factory=list)
    masks: list = field(default_factory=list)   # bool [H, W], aligned with object_ids

    def __eq__(self, other):
        return (
            isinstance(other, FrameRecord)
            and np.array_equal(self.image, other.image)
            and self.object_ids == other.object_ids
            and len(self.masks) == len(other.masks)
            and all(np.array_equal(a, b) for a, b in zip(self.masks, other.masks))
        )


def _local_coords(h, w, inst):
    """Object-local coordinates of every pixel center."""
    ys, xs = np.mgrid[0:h, 0:w]
    px = xs + 0.5 - inst.x
    py = ys + 0.5 - inst.y
    c, s = np.cos(-inst.rotation), np.sin(-inst.rotation)
    return px * c - py * s, px * s + py * c


def _inside(inst: ObjectInstance, h, w):
    lx, ly = _local_coords(h, w, inst)
    half = inst.shape.scale * min(h, w) / 2.0
    kind, params = inst.shape.outline
    if kind == "ellipse":
        a, b = params
        return (lx / (half * a)) ** 2 + (ly / (half * b)) ** 2 <= 1.0, (lx, ly)
    verts = np.asarray(params) * half
    inside = np.ones((h, w), dtype=bool)
    n = len(verts)
    for i in range(n):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % n]
        inside &= (x1 - x0) * (ly - y0) - (y1 - y0) * (lx - x0) >= 0.0
    return inside, (lx, ly)


def _texture(shape: ShapeSpec, lx, ly, sel):
    tile = np.random.default_rng(shape.texture_seed).uniform(-1.0, 1.0, size=(TEXTURE_TILE, TEXTURE_TILE))
    ty = np.floor(ly[sel]).astype(np.int64) % TEXTURE_TILE
    tx = np.floor(lx[sel]).astype(np.int64) % TEXTURE_TILE
    return tile[ty, tx] * shape.texture_amplitude


def make_background(h, w, seed) -> np.ndarray:
    """Static textured flat field shared by all frames of a sequence."""
    rng = np.random.default_rng(seed)
    gray = 0.35 + rng.uniform(-1.0, 1.0, size=(h, w, 1)) * 0.03
    return np.repeat(gray, 3, axis=2).astype(np.float64)


def rasterize_frame(instances, height, width, background=None) -> FrameRecord:
    """Paint instances over the background in ascending z order.

    Visibility is opaque: each pixel belongs to the topmost object covering
    it. Objects with no visible pixel contribute no mask.
    """
    img = background.copy() if background is not None else make_background(height, width, 0)
    owner = np.full((height, width), -1, dtype=np.int64)
    drawn = [inst for inst in instances if inst.present]
    drawn.sort(key=lambda i: (i.z, i.object_id))
    for idx, inst in enumerate(drawn):
        sel, (lx, ly) = _inside(inst, height, width)
        if not sel.any():
            continue
        owner[sel] = idx
        shade = np.asarray(inst.shape.color)[None, :] + _texture(inst.shape, lx, ly, sel)[:, None]
        img[sel] = shade

    quant = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    record = FrameRecord(image=quant.astype(np.float32) / 255.0)
    for idx, inst in sorted(enumerate(drawn), key=lambda t: t[1].object_id):
        mask = owner == idx
        if mask.any():
            record.object_ids.append(inst.object_id)
            record.masks.append(mask)
    return record
