"""Fixture builders: small hand-authored scene bundles written to disk.

Geometry is chosen so occlusion matrices, support edges, and fall distances
can be verified by independent pixel scans in the tests.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np
from PIL import Image


def write_png_rgba(path: Path, data: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(data.astype(np.uint8), mode="RGBA").save(path)


def write_png_gray(path: Path, bits: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    gray = np.where(bits.astype(bool), 255, 0).astype(np.uint8)
    Image.fromarray(gray, mode="L").save(path)


def solid_rgba(width: int, height: int, rgba) -> np.ndarray:
    out = np.zeros((height, width, 4), dtype=np.uint8)
    out[:, :] = rgba
    return out


def checker_background(width: int, height: int, a=(40, 44, 52, 255), b=(58, 62, 70, 255)) -> np.ndarray:
    out = np.zeros((height, width, 4), dtype=np.uint8)
    yy, xx = np.mgrid[0:height, 0:width]
    flip = ((xx // 8 + yy // 8) % 2).astype(bool)
    out[~flip] = a
    out[flip] = b
    return out


def build_bundle(
    root: Path,
    canvas: tuple[int, int],
    background: np.ndarray,
    layers: list[dict],
    ground_y: int | None = None,
    occlusion: list[list[str]] | None = None,
    constraints: list[dict] | None = None,
) -> Path:
    """Write a bundle directory; each layer dict carries id/name/rgba/offset
    plus optional visible_bits, depth_hint, affected_by_gravity, anchored."""
    root.mkdir(parents=True, exist_ok=True)
    write_png_rgba(root / "background.png", background)
    entries = []
    for spec in layers:
        lid = spec["id"]
        rel = f"layers/{lid}.png"
        write_png_rgba(root / rel, spec["rgba"])
        entry = {
            "id": lid,
            "name": spec.get("name", lid),
            "amodal": rel,
            "offset": list(spec.get("offset", (0, 0))),
        }
        if spec.get("visible_bits") is not None:
            vrel = f"masks/{lid}.png"
            write_png_gray(root / vrel, spec["visible_bits"])
            entry["visible_mask"] = vrel
        if spec.get("depth_hint") is not None:
            entry["depth_hint"] = spec["depth_hint"]
        if spec.get("scale") is not None:
            entry["scale"] = spec["scale"]
        if spec.get("affected_by_gravity") is not None:
            entry["affected_by_gravity"] = spec["affected_by_gravity"]
        if spec.get("anchored") is not None:
            entry["anchored"] = spec["anchored"]
        entries.append(entry)
    manifest = {
        "version": 1,
        "canvas": {"width": canvas[0], "height": canvas[1]},
        "background": "background.png",
        "layers": entries,
    }
    if ground_y is not None:
        manifest["ground_y"] = ground_y
    if occlusion is not None:
        manifest["occlusion"] = occlusion
    if constraints is not None:
        manifest["constraints"] = constraints
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return root


def opaque_box(width: int, height: int, rgb) -> np.ndarray:
    return solid_rgba(width, height, tuple(rgb) + (255,))


def two_square_bundle(root: Path) -> Path:
    """Square A (20x20 at (5,5)) with its 10x10 bottom-right corner hidden
    exactly where square B (10x10 at (15,15), fully visible) sits on top."""
    a = opaque_box(20, 20, (200, 60, 60))
    b = opaque_box(10, 10, (60, 60, 200))
    a_visible = np.ones((20, 20), dtype=bool)
    a_visible[10:20, 10:20] = False  # hole under B
    b_visible = np.ones((10, 10), dtype=bool)
    return build_bundle(
        root,
        canvas=(40, 40),
        background=checker_background(40, 40),
        layers=[
            {"id": "a", "name": "square A", "rgba": a, "offset": (5, 5),
             "visible_bits": a_visible, "affected_by_gravity": False},
            {"id": "b", "name": "square B", "rgba": b, "offset": (15, 15),
             "visible_bits": b_visible, "affected_by_gravity": False},
        ],
    )


def chain3_bundle(root: Path) -> Path:
    """Three 20x20 squares overlapping left to right: A under B, B under C."""
    a = opaque_box(20, 20, (200, 60, 60))
    b = opaque_box(20, 20, (60, 200, 60))
    c = opaque_box(20, 20, (60, 60, 200))
    a_vis = np.ones((20, 20), dtype=bool)
    a_vis[:, 15:20] = False  # hidden under B (canvas x 20..25)
    b_vis = np.ones((20, 20), dtype=bool)
    b_vis[:, 15:20] = False  # hidden under C (canvas x 35..40)
    c_vis = np.ones((20, 20), dtype=bool)
    return build_bundle(
        root,
        canvas=(60, 30),
        background=checker_background(60, 30),
        layers=[
            {"id": "a", "name": "left card", "rgba": a, "offset": (5, 5),
             "visible_bits": a_vis, "affected_by_gravity": False},
            {"id": "b", "name": "middle card", "rgba": b, "offset": (20, 5),
             "visible_bits": b_vis, "affected_by_gravity": False},
            {"id": "c", "name": "right card", "rgba": c, "offset": (35, 5),
             "visible_bits": c_vis, "affected_by_gravity": False},
        ],
    )


def crow_pumpkin_bundle(root: Path, constraints: list[dict] | None = None) -> Path:
    """A crow resting on a pumpkin that stands on the ground, plus an
    anchored moon that gravity must never touch.

    Canvas 80x100, ground at y=100.  Pumpkin rows 60..99 (grounded), crow
    rows 48..59 (contact gap 1 to the pumpkin top), 40 px above the ground
    once the pumpkin is gone.
    """
    pumpkin = opaque_box(30, 40, (230, 130, 30))
    crow = opaque_box(16, 12, (25, 25, 30))
    moon = opaque_box(14, 14, (235, 235, 210))
    return build_bundle(
        root,
        canvas=(80, 100),
        background=checker_background(80, 100, (24, 26, 38, 255), (30, 33, 46, 255)),
        ground_y=100,
        layers=[
            {"id": "pumpkin", "name": "pumpkin", "rgba": pumpkin, "offset": (25, 60),
             "visible_bits": np.ones((40, 30), dtype=bool), "depth_hint": 2.0},
            {"id": "crow", "name": "crow", "rgba": crow, "offset": (32, 48),
             "visible_bits": np.ones((12, 16), dtype=bool), "depth_hint": 1.5},
            {"id": "moon", "name": "moon", "rgba": moon, "offset": (58, 6),
             "visible_bits": np.ones((14, 14), dtype=bool), "depth_hint": 9.0,
             "affected_by_gravity": False},
        ],
        constraints=constraints,
    )


def source_image(width: int = 48, height: int = 48) -> np.ndarray:
    """Deterministic opaque test card with gradients and a diagonal stripe."""
    yy, xx = np.mgrid[0:height, 0:width]
    out = np.zeros((height, width, 4), dtype=np.uint8)
    out[:, :, 0] = (xx * 255 // max(1, width - 1)).astype(np.uint8)
    out[:, :, 1] = (yy * 255 // max(1, height - 1)).astype(np.uint8)
    out[:, :, 2] = ((xx + yy) % 17 * 15).astype(np.uint8)
    stripe = (np.abs(xx - yy) < 3)
    out[stripe, 2] = 250
    out[:, :, 3] = 255
    return out


def tiles_bundle(root: Path) -> Path:
    """Two non-overlapping opaque tiles cut from a known source; the
    background keeps the source with the cut regions blanked, so the
    composite must reproduce the source byte-for-byte."""
    src = source_image(48, 48)
    t1 = src[8:24, 8:24].copy()
    t2 = src[12:36, 28:44].copy()
    background = src.copy()
    background[8:24, 8:24] = (0, 0, 0, 255)
    background[12:36, 28:44] = (0, 0, 0, 255)
    return build_bundle(
        root,
        canvas=(48, 48),
        background=background,
        layers=[
            {"id": "tile1", "name": "tile one", "rgba": t1, "offset": (8, 8),
             "visible_bits": np.ones((16, 16), dtype=bool),
             "affected_by_gravity": False},
            {"id": "tile2", "name": "tile two", "rgba": t2, "offset": (28, 12),
             "visible_bits": np.ones((24, 16), dtype=bool),
             "affected_by_gravity": False},
        ],
    )


def png_bytes(data: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(data.astype(np.uint8), mode="RGBA").save(buf, format="PNG")
    return buf.getvalue()
