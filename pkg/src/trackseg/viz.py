"""Qualitative overlays: per-trajectory colors and printed track indices."""

from __future__ import annotations

import colorsys

import numpy as np
from PIL import Image

# 3x5 glyphs for digits, row-major strings
_DIGITS = {
    "0": ("111", "101", "101", "101", "111"),
    "1": ("010", "110", "010", "010", "111"),
    "2": ("111", "001", "111", "100", "111"),
    "3": ("111", "001", "111", "001", "111"),
    "4": ("101", "101", "111", "001", "001"),
    "5": ("111", "100", "111", "001", "111"),
    "6": ("111", "100", "111", "101", "111"),
    "7": ("111", "001", "010", "010", "010"),
    "8": ("111", "101", "111", "101", "111"),
    "9": ("111", "101", "111", "001", "111"),
}


def track_color(track_id: int) -> np.ndarray:
    """Stable, well-separated hue per trajectory id (golden-ratio walk)."""
    hue = (track_id * 0.6180339887498949) % 1.0
    return np.asarray(colorsys.hsv_to_rgb(hue, 0.85, 1.0), dtype=np.float32)


def _draw_number(img: np.ndarray, text: str, top: int, left: int, color):
    h, w = img.shape[:2]
    x = left
    for ch in text:
        glyph = _DIGITS.get(ch)
        if glyph is None:
            continue
        for r, row in enumerate(glyph):
            for c, bit in enumerate(row):
                if bit == "1" and 0 <= top + r < h and 0 <= x + c < w:
                    img[top + r, x + c] = color
        x += 4


def render_overlay(image: np.ndarray, tracks, frame_index: int, alpha: float = 0.55) -> np.ndarray:
    """Blend each track's mask in its color and stamp the trajectory id."""
    out = image.astype(np.float32).copy()
    for tr in tracks:
        mask = tr.masks[frame_index]
        if mask is None or not mask.any():
            continue
        color = track_color(tr.track_id)
        out[mask] = (1.0 - alpha) * out[mask] + alpha * color
    for tr in tracks:
        mask = tr.masks[frame_index]
        if mask is None or not mask.any():
            continue
        ys, xs = np.nonzero(mask)
        cy, cx = int(ys.mean()), int(xs.mean())
        label = str(tr.track_id)
        _draw_number(out, label, cy - 2, cx - 2 * len(label) + 1, np.zeros(3, dtype=np.float32))
    return np.clip(np.round(out * 255.0), 0, 255).astype(np.uint8)


def save_overlay(path: str, image: np.ndarray, tracks, frame_index: int):
    Image.fromarray(render_overlay(image, tracks, frame_index), "RGB").save(path)
