"""Pluggable appearance synthesizer for EDIT and INSERT.

Real deployments plug a generative backend in here; the bundled stub is
fully deterministic for a fixed (prompt, seed) pair so sessions replay
bit-exactly and the test suite needs no models.
"""

from __future__ import annotations

import hashlib
from typing import Protocol

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .model import Mask, Raster


class Synthesizer(Protocol):
    can_edit: bool
    can_insert: bool

    def edit(self, raster: Raster, mask: Mask, prompt: str, edit_type: str) -> Raster:
        """Rewrite the raster's RGB under the mask; alpha must be preserved."""
        ...

    def insert(self, prompt: str, width: int, height: int) -> Raster:
        """Produce a new RGBA raster of exactly (width, height)."""
        ...


def _digest_ints(seed: int, prompt: str, n: int) -> list[int]:
    raw = hashlib.sha256(f"{seed}:{prompt}".encode("utf-8")).digest()
    return [int.from_bytes(raw[4 * k:4 * k + 4], "little") for k in range(n)]


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Vectorized RGB->HSV on float arrays in [0, 1]; h in [0, 1)."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    v = maxc
    delta = maxc - minc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    safe = np.where(delta > 0, delta, 1.0)
    h = np.zeros_like(maxc)
    h = np.where(maxc == r, ((g - b) / safe) % 6.0, h)
    h = np.where(maxc == g, (b - r) / safe + 2.0, h)
    h = np.where(maxc == b, (r - g) / safe + 4.0, h)
    h = np.where(delta > 0, h / 6.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0] % 1.0, hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


class StubSynthesizer:
    """Deterministic, model-free synthesizer.

    EDIT: ``recolor`` rotates hue by a prompt-hashed angle, ``texture``
    paints a prompt-hashed tiling checker, ``style`` posterizes to a
    prompt-hashed level count.  INSERT draws a labeled rounded rectangle in
    a prompt-hashed color.
    """

    can_edit = True
    can_insert = True

    def __init__(self, seed: int = 0):
        self.seed = seed

    def edit(self, raster: Raster, mask: Mask, prompt: str, edit_type: str) -> Raster:
        rgb = raster.data[:, :, :3].astype(np.float64) / 255.0
        alpha = raster.data[:, :, 3].copy()
        inside = mask.bits
        if edit_type == "recolor":
            out = self._recolor(rgb, inside, prompt)
        elif edit_type == "texture":
            out = self._texture(rgb, inside, prompt)
        elif edit_type == "style":
            out = self._style(rgb, inside, prompt)
        else:
            raise ValueError(f"stub synthesizer does not implement edit_type {edit_type!r}")
        data = np.empty_like(raster.data)
        data[:, :, :3] = np.floor(np.clip(out, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
        data[:, :, 3] = alpha
        return Raster(data)

    def _recolor(self, rgb, inside, prompt):
        (angle,) = _digest_ints(self.seed, "recolor:" + prompt, 1)
        shift = (angle % 300 + 30) / 360.0  # avoid near-identity rotations
        hsv = rgb_to_hsv(rgb)
        hsv[..., 0] = (hsv[..., 0] + shift) % 1.0
        rotated = hsv_to_rgb(hsv)
        return np.where(inside[..., None], rotated, rgb)

    def _texture(self, rgb, inside, prompt):
        h, w = rgb.shape[:2]
        a, b, c = _digest_ints(self.seed, "texture:" + prompt, 3)
        tile = 2 + a % 6
        col1 = np.array([(b >> s) & 0xFF for s in (0, 8, 16)], dtype=np.float64) / 255.0
        col2 = np.array([(c >> s) & 0xFF for s in (0, 8, 16)], dtype=np.float64) / 255.0
        yy, xx = np.mgrid[0:h, 0:w]
        checker = ((xx // tile + yy // tile) % 2).astype(bool)
        pattern = np.where(checker[..., None], col1, col2)
        return np.where(inside[..., None], pattern, rgb)

    def _style(self, rgb, inside, prompt):
        (a,) = _digest_ints(self.seed, "style:" + prompt, 1)
        levels = 3 + a % 4
        poster = np.floor(rgb * (levels - 1) + 0.5) / (levels - 1)
        return np.where(inside[..., None], poster, rgb)

    def insert(self, prompt: str, width: int, height: int) -> Raster:
        a, b = _digest_ints(self.seed, "insert:" + prompt, 2)
        fill = tuple((a >> s) & 0xFF for s in (0, 8, 16)) + (255,)
        img = Image.new("RGBA", (width, height), (0, 0, 0, 0))
        draw = ImageDraw.Draw(img)
        radius = max(1, min(width, height) // 5)
        draw.rounded_rectangle([0, 0, width - 1, height - 1], radius=radius, fill=fill)
        label = prompt.strip()[:12]
        if label:
            luma = 0.2126 * fill[0] + 0.7152 * fill[1] + 0.0722 * fill[2]
            ink = (0, 0, 0, 255) if luma > 128 else (255, 255, 255, 255)
            try:
                font = ImageFont.load_default()
                draw.text((max(1, width // 10), max(1, height // 3)), label,
                          fill=ink, font=font)
            except OSError:  # no usable font; shape alone is fine
                pass
        return Raster(np.asarray(img, dtype=np.uint8))


class NullSynthesizer:
    """Synthesizer that refuses everything; EDIT/INSERT become rejections."""

    can_edit = False
    can_insert = False

    def edit(self, raster, mask, prompt, edit_type):  # pragma: no cover
        raise RuntimeError("null synthesizer cannot edit")

    def insert(self, prompt, width, height):  # pragma: no cover
        raise RuntimeError("null synthesizer cannot insert")
