"""Flat rendering of an environment: background first, then layers back to
front with straight-alpha `over`, each layer transformed and photometrically
adjusted.

Blend math runs in float64 and quantizes to 8 bits after every layer with
round-half-up, so renders are byte-deterministic across platforms and
compositing front layers over an already-flattened rest reproduces the full
composite within one LSB.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidStacking, UnknownLayer
from .model import (
    Environment,
    Mask,
    ObjectLayer,
    Photometry,
    Raster,
    resize_rgba_bilinear,
)

# Rec.709 luma weights for the saturation stage.
_LUMA = np.array([0.2126, 0.7152, 0.0722], dtype=np.float64)


@dataclass
class RenderOptions:
    highlight: set[str] = field(default_factory=set)
    region: Optional[tuple[int, int, int, int]] = None  # (x, y, w, h)


def apply_photometry(rgb: np.ndarray, attrs: Photometry) -> np.ndarray:
    """Photometric pipeline on float RGB in [0, 1], clamped after each stage.

    Order: brightness (rgb*b), contrast ((rgb-0.5)*c+0.5), saturation
    (gray + s*(rgb-gray), Rec.709 gray), then unsharp sharpening
    (blur3 + k*(rgb-blur3)).  Factor 1.0 is the identity at every stage.
    """
    if attrs.is_identity():
        return rgb
    out = rgb
    if attrs.brightness != 1.0:
        out = np.clip(out * attrs.brightness, 0.0, 1.0)
    if attrs.contrast != 1.0:
        out = np.clip((out - 0.5) * attrs.contrast + 0.5, 0.0, 1.0)
    if attrs.color != 1.0:
        gray = (out @ _LUMA)[..., None]
        out = np.clip(gray + attrs.color * (out - gray), 0.0, 1.0)
    if attrs.sharpness != 1.0:
        blur = _box_blur3(out)
        out = np.clip(blur + attrs.sharpness * (out - blur), 0.0, 1.0)
    return out


def _box_blur3(rgb: np.ndarray) -> np.ndarray:
    padded = np.pad(rgb, ((1, 1), (1, 1), (0, 0)), mode="edge")
    acc = np.zeros_like(rgb)
    for dy in range(3):
        for dx in range(3):
            acc += padded[dy:dy + rgb.shape[0], dx:dx + rgb.shape[1]]
    return acc / 9.0


def _check_stacking(env: Environment) -> None:
    visible = sorted(l.id for l in env.layers if l.visible)
    if sorted(env.stacking) != visible:
        raise InvalidStacking(
            "stacking is not a permutation of the visible layer ids")
    scores = {l.id: l.depth_score for l in env.layers}
    for k in range(len(env.stacking) - 1):
        front, back = env.stacking[k], env.stacking[k + 1]
        if scores[front] < scores[back]:
            raise InvalidStacking(
                f"stacking violates depth monotonicity: {front} (D={scores[front]}) "
                f"drawn in front of {back} (D={scores[back]})")


def _quantize(channel: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(channel, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def _blend_layer(canvas: np.ndarray, layer: ObjectLayer) -> None:
    """Transform, retouch, and `over`-blend one layer onto the uint8 canvas."""
    w, h = layer.scaled_size()
    tile = resize_rgba_bilinear(layer.amodal.data, w, h)

    ch, cw = canvas.shape[:2]
    x0, y0 = layer.offset
    dx0, dy0 = max(0, x0), max(0, y0)
    dx1, dy1 = min(cw, x0 + w), min(ch, y0 + h)
    if dx1 <= dx0 or dy1 <= dy0:
        return  # entirely off-canvas
    sx0, sy0 = dx0 - x0, dy0 - y0
    tile = tile[sy0:sy0 + (dy1 - dy0), sx0:sx0 + (dx1 - dx0)]

    src_rgb = tile[:, :, :3].astype(np.float64) / 255.0
    src_a = tile[:, :, 3].astype(np.float64) / 255.0
    src_rgb = apply_photometry(src_rgb, layer.attributes)

    dst = canvas[dy0:dy1, dx0:dx1]
    dst_rgb = dst[:, :, :3].astype(np.float64) / 255.0
    dst_a = dst[:, :, 3].astype(np.float64) / 255.0

    a = src_a[:, :, None]
    out_rgb = src_rgb * a + dst_rgb * (1.0 - a)
    out_a = src_a + dst_a * (1.0 - src_a)
    dst[:, :, :3] = _quantize(out_rgb)
    dst[:, :, 3] = _quantize(out_a)


def composite(env: Environment, opts: Optional[RenderOptions] = None) -> Raster:
    """Render the environment to a flat RGBA raster.

    Refuses to render a stacking order that violates depth monotonicity
    rather than silently producing a wrong image.
    """
    opts = opts or RenderOptions()
    _check_stacking(env)
    canvas = env.background.data.copy()
    by_id = {l.id: l for l in env.layers}
    for lid in reversed(env.stacking):  # back-most painted first
        _blend_layer(canvas, by_id[lid])

    if opts.highlight:
        for lid in sorted(opts.highlight):
            if lid in by_id and by_id[lid].visible:
                _outline_bbox(canvas, by_id[lid].bbox())

    if opts.region is not None:
        x, y, w, h = opts.region
        cw, ch = env.canvas
        if not (0 <= x and 0 <= y and w > 0 and h > 0 and x + w <= cw and y + h <= ch):
            raise ValueError(f"region {opts.region} outside canvas {env.canvas}")
        canvas = canvas[y:y + h, x:x + w].copy()
    return Raster(canvas)


def _outline_bbox(canvas: np.ndarray, bbox: tuple[int, int, int, int]) -> None:
    color = np.array([255, 0, 255, 255], dtype=np.uint8)
    ch, cw = canvas.shape[:2]
    x, y, w, h = bbox
    x0, y0 = max(0, x), max(0, y)
    x1, y1 = min(cw, x + w), min(ch, y + h)
    if x1 <= x0 or y1 <= y0:
        return
    canvas[y0, x0:x1] = color
    canvas[y1 - 1, x0:x1] = color
    canvas[y0:y1, x0] = color
    canvas[y0:y1, x1 - 1] = color


def composite_mask(env: Environment, layer_ids) -> Mask:
    """Canvas-sized union of the transformed amodal masks of the given layers.

    Hidden layers contribute too: an edit mask must cover regions a REMOVE
    exposed, not only what is currently drawn.
    """
    cw, ch = env.canvas
    out = np.zeros((ch, cw), dtype=bool)
    for lid in sorted(set(layer_ids)):
        layer = env.layer(lid)  # raises UnknownLayer
        out |= layer.canvas_mask(env.canvas)
    return Mask(out)


__all__ = [
    "RenderOptions",
    "apply_photometry",
    "composite",
    "composite_mask",
    "InvalidStacking",
    "UnknownLayer",
]
