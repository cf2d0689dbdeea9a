"""Core scene model: rasters, masks, object layers, the live environment,
and the on-disk scene bundle format.

A scene bundle is a directory (or zip archive) holding ``manifest.json``
plus PNG assets:

* ``version`` (int, must be 1)
* ``canvas`` — ``{"width": W, "height": H}``
* ``background`` — relative path to an RGBA PNG matching the canvas
* ``ground_y`` — optional canvas row acting as the ground plane
  (default: canvas height)
* ``layers`` — list of ``{id, name, amodal, visible_mask?, offset: [x, y],
  depth_hint?, scale?, affected_by_gravity?, anchored?}``
* ``occlusion`` — optional list of ``[occluded_id, occluder_id]`` pairs
* ``constraints`` — optional evaluation constraints (see metrics)

Rasters are 8-bit RGBA PNG with straight (non-premultiplied) alpha; masks
are 8-bit grayscale PNG thresholded at 128.
"""

from __future__ import annotations

import copy
import hashlib
import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Optional

import numpy as np
from PIL import Image

from .errors import (
    DuplicateLayerId,
    IoFailure,
    MalformedManifest,
    MaskOutOfBounds,
    MissingAsset,
    UnknownLayer,
    VersionUnsupported,
)

if TYPE_CHECKING:  # pragma: no cover
    from .actions import ActionRecord
    from .ordering import OcclusionGraph

BUNDLE_VERSION = 1
MASK_THRESHOLD = 128


# -- rasters and masks --------------------------------------------------------

@dataclass
class Raster:
    """RGBA image, straight alpha, 8 bits per channel, row-major (H, W, 4)."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.uint8)
        if not self.data.flags.writeable:
            self.data = self.data.copy()
        if self.data.ndim != 3 or self.data.shape[2] != 4:
            raise ValueError(f"raster must be (H, W, 4), got {self.data.shape}")

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def alpha(self) -> np.ndarray:
        return self.data[:, :, 3]

    @classmethod
    def blank(cls, width: int, height: int, rgba=(0, 0, 0, 0)) -> "Raster":
        data = np.empty((height, width, 4), dtype=np.uint8)
        data[:, :] = rgba
        return cls(data)

    @classmethod
    def from_png_bytes(cls, raw: bytes) -> "Raster":
        img = Image.open(io.BytesIO(raw))
        return cls(np.array(img.convert("RGBA"), dtype=np.uint8))

    def to_png_bytes(self) -> bytes:
        buf = io.BytesIO()
        Image.fromarray(self.data, mode="RGBA").save(buf, format="PNG")
        return buf.getvalue()

    def copy(self) -> "Raster":
        return Raster(self.data.copy())

    def __eq__(self, other) -> bool:
        return isinstance(other, Raster) and np.array_equal(self.data, other.data)


@dataclass
class Mask:
    """Binary pixel grid; dimensions match the raster it annotates."""

    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.ascontiguousarray(self.bits, dtype=bool)
        if self.bits.ndim != 2:
            raise ValueError(f"mask must be (H, W), got {self.bits.shape}")

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def popcount(self) -> int:
        return int(self.bits.sum())

    @classmethod
    def from_png_bytes(cls, raw: bytes) -> "Mask":
        img = Image.open(io.BytesIO(raw))
        gray = np.array(img.convert("L"), dtype=np.uint8)
        return cls(gray >= MASK_THRESHOLD)

    def to_png_bytes(self) -> bytes:
        buf = io.BytesIO()
        gray = np.where(self.bits, 255, 0).astype(np.uint8)
        Image.fromarray(gray, mode="L").save(buf, format="PNG")
        return buf.getvalue()

    def copy(self) -> "Mask":
        return Mask(self.bits.copy())

    def __eq__(self, other) -> bool:
        return isinstance(other, Mask) and np.array_equal(self.bits, other.bits)


# -- resampling ---------------------------------------------------------------
# Fixed here so rendering, physics, and metrics all see identical geometry:
# bilinear for color, nearest-neighbor for masks (no fractional mask values).

def resize_mask_nearest(bits: np.ndarray, width: int, height: int) -> np.ndarray:
    src_h, src_w = bits.shape
    if (src_w, src_h) == (width, height):
        return bits.copy()
    xs = np.minimum(((np.arange(width) + 0.5) * src_w / width).astype(np.int64), src_w - 1)
    ys = np.minimum(((np.arange(height) + 0.5) * src_h / height).astype(np.int64), src_h - 1)
    return bits[np.ix_(ys, xs)]


def resize_rgba_bilinear(data: np.ndarray, width: int, height: int) -> np.ndarray:
    src_h, src_w = data.shape[:2]
    if (src_w, src_h) == (width, height):
        return data.copy()
    sx = (np.arange(width) + 0.5) * src_w / width - 0.5
    sy = (np.arange(height) + 0.5) * src_h / height - 0.5
    x0 = np.clip(np.floor(sx).astype(np.int64), 0, src_w - 1)
    y0 = np.clip(np.floor(sy).astype(np.int64), 0, src_h - 1)
    x1 = np.minimum(x0 + 1, src_w - 1)
    y1 = np.minimum(y0 + 1, src_h - 1)
    fx = np.clip(sx - x0, 0.0, 1.0)[None, :, None]
    fy = np.clip(sy - y0, 0.0, 1.0)[:, None, None]
    src = data.astype(np.float64)
    top = src[np.ix_(y0, x0)] * (1 - fx) + src[np.ix_(y0, x1)] * fx
    bot = src[np.ix_(y1, x0)] * (1 - fx) + src[np.ix_(y1, x1)] * fx
    out = top * (1 - fy) + bot * fy
    return np.floor(out + 0.5).astype(np.uint8)  # round half up


# -- layers -------------------------------------------------------------------

@dataclass
class Photometry:
    """Multiplicative photometric state; 1.0 is the identity for each factor."""

    brightness: float = 1.0
    contrast: float = 1.0
    color: float = 1.0
    sharpness: float = 1.0

    def is_identity(self) -> bool:
        return (self.brightness, self.contrast, self.color, self.sharpness) == (1.0,) * 4

    def compose(self, brightness=1.0, contrast=1.0, color=1.0, sharpness=1.0) -> None:
        self.brightness *= brightness
        self.contrast *= contrast
        self.color *= color
        self.sharpness *= sharpness

    def as_dict(self) -> dict[str, float]:
        return {
            "brightness": self.brightness,
            "contrast": self.contrast,
            "color": self.color,
            "sharpness": self.sharpness,
        }


@dataclass
class ObjectLayer:
    """One amodal object layer: complete RGBA appearance plus placement state.

    ``offset`` is the canvas position of the transformed raster's top-left
    corner; ``scale`` resamples the raster about that placement at render
    time.  ``amodal_mask`` is derived (alpha > 0) and kept at the raster's
    native resolution; ``visible_mask``, when present, marks the subset of
    amodal pixels visible in the source image.
    """

    id: str
    name: str
    amodal: Raster
    amodal_mask: Mask
    visible_mask: Optional[Mask] = None
    offset: tuple[int, int] = (0, 0)
    depth_hint: Optional[float] = None
    depth_score: int = 0
    scale: float = 1.0
    visible: bool = True
    affected_by_gravity: bool = True
    anchored: bool = False
    attributes: Photometry = field(default_factory=Photometry)

    @classmethod
    def from_raster(cls, layer_id: str, name: str, amodal: Raster, **kwargs) -> "ObjectLayer":
        mask = Mask(amodal.alpha > 0)
        return cls(id=layer_id, name=name, amodal=amodal, amodal_mask=mask, **kwargs)

    def refresh_amodal_mask(self) -> None:
        self.amodal_mask = Mask(self.amodal.alpha > 0)

    def scaled_size(self) -> tuple[int, int]:
        if self.scale == 1.0:
            return self.amodal.width, self.amodal.height
        w = max(1, round(self.amodal.width * self.scale))
        h = max(1, round(self.amodal.height * self.scale))
        return w, h

    def bbox(self) -> tuple[int, int, int, int]:
        """Transformed raster placement as (x, y, w, h) in canvas pixels."""
        w, h = self.scaled_size()
        return self.offset[0], self.offset[1], w, h

    def center(self) -> tuple[float, float]:
        x, y, w, h = self.bbox()
        return x + w / 2.0, y + h / 2.0

    def transformed_mask(self, which: str = "amodal") -> np.ndarray:
        """Scaled binary mask (nearest-neighbor) in the layer's local frame."""
        mask = self.amodal_mask if which == "amodal" else self.visible_mask
        if mask is None:
            raise ValueError(f"layer {self.id!r} has no {which} mask")
        w, h = self.scaled_size()
        return resize_mask_nearest(mask.bits, w, h)

    def canvas_mask(self, canvas: tuple[int, int], which: str = "amodal") -> np.ndarray:
        """Transformed mask painted onto a canvas-sized boolean grid."""
        cw, ch = canvas
        out = np.zeros((ch, cw), dtype=bool)
        bits = self.transformed_mask(which)
        paste_bool(out, bits, self.offset)
        return out

    def copy(self) -> "ObjectLayer":
        return ObjectLayer(
            id=self.id,
            name=self.name,
            amodal=self.amodal.copy(),
            amodal_mask=self.amodal_mask.copy(),
            visible_mask=self.visible_mask.copy() if self.visible_mask else None,
            offset=self.offset,
            depth_hint=self.depth_hint,
            depth_score=self.depth_score,
            scale=self.scale,
            visible=self.visible,
            affected_by_gravity=self.affected_by_gravity,
            anchored=self.anchored,
            attributes=copy.copy(self.attributes),
        )


def paste_bool(canvas: np.ndarray, bits: np.ndarray, offset: tuple[int, int]) -> None:
    """OR a boolean tile into a canvas grid, cropping off-canvas parts."""
    ch, cw = canvas.shape
    h, w = bits.shape
    x0, y0 = offset
    sx0, sy0 = max(0, -x0), max(0, -y0)
    dx0, dy0 = max(0, x0), max(0, y0)
    dx1, dy1 = min(cw, x0 + w), min(ch, y0 + h)
    if dx1 <= dx0 or dy1 <= dy0:
        return
    canvas[dy0:dy1, dx0:dx1] |= bits[sy0:sy0 + (dy1 - dy0), sx0:sx0 + (dx1 - dx0)]


# -- environment --------------------------------------------------------------

@dataclass
class Environment:
    """Live scene state: background, layers, stacking order, and session log."""

    canvas: tuple[int, int]
    background: Raster
    layers: list[ObjectLayer] = field(default_factory=list)
    stacking: list[str] = field(default_factory=list)
    ground_y: int = -1  # -1: default to the canvas bottom edge
    action_log: list["ActionRecord"] = field(default_factory=list)
    round: int = 0
    explicit_occlusion: Optional[list[tuple[str, str]]] = None
    constraints: Optional[list[dict]] = None
    occlusion: Optional["OcclusionGraph"] = None
    baseline: Optional["Environment"] = None

    def __post_init__(self):
        if not self.stacking:
            self.stacking = [l.id for l in self.layers if l.visible]
        if self.ground_y < 0:
            self.ground_y = self.canvas[1]

    def layer(self, layer_id: str) -> ObjectLayer:
        for layer in self.layers:
            if layer.id == layer_id:
                return layer
        raise UnknownLayer(f"no layer with id {layer_id!r}", layer_id=layer_id)

    def has_layer(self, layer_id: str) -> bool:
        return any(l.id == layer_id for l in self.layers)

    def visible_layers(self) -> list[ObjectLayer]:
        return [l for l in self.layers if l.visible]

    def clone(self, with_baseline: bool = False) -> "Environment":
        env = Environment(
            canvas=self.canvas,
            background=self.background.copy(),
            layers=[l.copy() for l in self.layers],
            stacking=list(self.stacking),
            ground_y=self.ground_y,
            action_log=list(self.action_log),
            round=self.round,
            explicit_occlusion=copy.deepcopy(self.explicit_occlusion),
            constraints=copy.deepcopy(self.constraints),
            occlusion=self.occlusion.copy() if self.occlusion is not None else None,
        )
        if with_baseline:
            env.baseline = self.baseline
        return env

    def freeze_baseline(self) -> None:
        """Snapshot the current state as the replay/undo starting point."""
        snap = self.clone()
        snap.action_log = []
        snap.round = 0
        self.baseline = snap


def state_digest(env: Environment) -> str:
    """Content hash of the environment's editable state.

    Covers canvas geometry, background bytes, every layer's pixels, masks,
    placement, flags, and photometric state, plus the stacking order.  The
    action log and round counter are deliberately excluded so that rejected
    actions and replays compare equal by digest.
    """
    h = hashlib.sha256()

    def put(tag: str, payload: bytes) -> None:
        h.update(tag.encode())
        h.update(len(payload).to_bytes(8, "little"))
        h.update(payload)

    put("canvas", json.dumps([env.canvas[0], env.canvas[1], env.ground_y]).encode())
    put("background", env.background.data.tobytes())
    for layer in env.layers:
        head = json.dumps(
            {
                "id": layer.id,
                "name": layer.name,
                "offset": list(layer.offset),
                "depth_hint": layer.depth_hint,
                "depth_score": layer.depth_score,
                "scale": repr(layer.scale),
                "visible": layer.visible,
                "gravity": layer.affected_by_gravity,
                "anchored": layer.anchored,
                "attributes": {k: repr(v) for k, v in layer.attributes.as_dict().items()},
            },
            sort_keys=True,
        ).encode()
        put("layer", head)
        put("amodal", layer.amodal.data.tobytes())
        put("amask", layer.amodal_mask.bits.tobytes())
        if layer.visible_mask is not None:
            put("vmask", layer.visible_mask.bits.tobytes())
    put("stacking", json.dumps(env.stacking).encode())
    return h.hexdigest()


# -- validation ---------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    layer_id: Optional[str]
    field: str
    rule: str
    message: str

    def as_dict(self) -> dict:
        return {
            "layer_id": self.layer_id,
            "field": self.field,
            "rule": self.rule,
            "message": self.message,
        }


def validate(env: Environment) -> list[Violation]:
    """Check every structural invariant; an empty list means the state is sound."""
    out: list[Violation] = []
    cw, ch = env.canvas
    if cw <= 0 or ch <= 0:
        out.append(Violation(None, "canvas", "positive size",
                             f"canvas must be positive, got {cw}x{ch}"))
    if (env.background.width, env.background.height) != (cw, ch):
        out.append(Violation(None, "background", "background matches canvas",
                             f"background is {env.background.width}x"
                             f"{env.background.height}, canvas is {cw}x{ch}"))
    if not 0 <= env.ground_y <= ch:
        out.append(Violation(None, "ground_y", "0 <= ground_y <= canvas height",
                             f"ground_y={env.ground_y} outside [0, {ch}]"))

    seen: set[str] = set()
    for layer in env.layers:
        if layer.id in seen:
            out.append(Violation(layer.id, "id", "id unique",
                                 f"duplicate layer id {layer.id!r}"))
        seen.add(layer.id)
        if layer.amodal.width <= 0 or layer.amodal.height <= 0:
            out.append(Violation(layer.id, "amodal", "positive size",
                                 "amodal raster is empty"))
        if layer.amodal_mask.bits.shape != layer.amodal.data.shape[:2]:
            out.append(Violation(layer.id, "amodal_mask", "dimensions match raster",
                                 "amodal_mask size differs from amodal raster"))
        elif not np.array_equal(layer.amodal_mask.bits, layer.amodal.alpha > 0):
            out.append(Violation(layer.id, "amodal_mask", "amodal_mask = alpha > 0",
                                 "amodal_mask is not the alpha coverage of the raster"))
        if layer.visible_mask is not None:
            if layer.visible_mask.bits.shape != layer.amodal_mask.bits.shape:
                out.append(Violation(layer.id, "visible_mask", "dimensions match raster",
                                     "visible_mask size differs from amodal raster"))
            else:
                stray = int((layer.visible_mask.bits & ~layer.amodal_mask.bits).sum())
                if stray:
                    out.append(Violation(
                        layer.id, "visible_mask", "visible ⊄ amodal",
                        f"{stray} visible pixel(s) outside the amodal mask"))
        if layer.scale <= 0:
            out.append(Violation(layer.id, "scale", "scale > 0",
                                 f"scale={layer.scale}"))
        if layer.depth_score < 0:
            out.append(Violation(layer.id, "depth_score", "depth_score >= 0",
                                 f"depth_score={layer.depth_score}"))

    visible_ids = [l.id for l in env.layers if l.visible]
    if sorted(env.stacking) != sorted(visible_ids):
        out.append(Violation(None, "stacking", "permutation of visible layers",
                             "stacking is not a permutation of visible layer ids"))
    else:
        scores = {l.id: l.depth_score for l in env.layers}
        for k in range(len(env.stacking) - 1):
            a, b = env.stacking[k], env.stacking[k + 1]
            if scores[a] < scores[b]:
                out.append(Violation(
                    a, "stacking", "depth monotonicity",
                    f"stacking[{k}]={a} (D={scores[a]}) is in front of "
                    f"{b} (D={scores[b]}) but has a lower depth score"))
    return out


# -- bundle IO ----------------------------------------------------------------

class _BundleReader:
    """Uniform byte access to a bundle directory or zip archive."""

    def __init__(self, path: Path):
        self.path = path
        self._zip: zipfile.ZipFile | None = None
        if path.is_file() and path.suffix == ".zip":
            self._zip = zipfile.ZipFile(path)
        elif not path.is_dir():
            raise MissingAsset(f"bundle not found: {path}", path=str(path))

    def read(self, rel: str) -> bytes:
        if self._zip is not None:
            try:
                return self._zip.read(rel)
            except KeyError:
                raise MissingAsset(f"missing asset {rel!r} in {self.path}",
                                   path=rel) from None
        target = self.path / rel
        if not target.is_file():
            raise MissingAsset(f"missing asset {rel!r} in {self.path}", path=rel)
        return target.read_bytes()

    def close(self) -> None:
        if self._zip is not None:
            self._zip.close()


def _manifest_error(msg: str) -> MalformedManifest:
    return MalformedManifest(msg)


def load_bundle(path: str | Path) -> Environment:
    """Load a scene bundle into a fresh Environment.

    All layers start visible with depth scores unset (0); the stacking order
    is a placeholder (manifest sequence) until the ordering pass runs.
    """
    reader = _BundleReader(Path(path))
    try:
        try:
            manifest = json.loads(reader.read("manifest.json").decode("utf-8"))
        except MissingAsset:
            raise
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise _manifest_error(f"manifest.json is not valid JSON: {exc}") from exc
        if not isinstance(manifest, dict):
            raise _manifest_error("manifest.json must be a JSON object")

        version = manifest.get("version")
        if version != BUNDLE_VERSION:
            raise VersionUnsupported(
                f"unsupported bundle version {version!r}; expected {BUNDLE_VERSION}",
                version=version)

        canvas_spec = manifest.get("canvas")
        if (not isinstance(canvas_spec, dict)
                or not isinstance(canvas_spec.get("width"), int)
                or not isinstance(canvas_spec.get("height"), int)):
            raise _manifest_error("canvas must be {\"width\": int, \"height\": int}")
        canvas = (canvas_spec["width"], canvas_spec["height"])
        if canvas[0] <= 0 or canvas[1] <= 0:
            raise _manifest_error(f"canvas size must be positive, got {canvas}")

        bg_path = manifest.get("background")
        if not isinstance(bg_path, str):
            raise _manifest_error("background must be a relative path string")
        background = Raster.from_png_bytes(reader.read(bg_path))
        if (background.width, background.height) != canvas:
            raise _manifest_error(
                f"background is {background.width}x{background.height} "
                f"but canvas is {canvas[0]}x{canvas[1]}")

        ground_y = manifest.get("ground_y", canvas[1])
        if not isinstance(ground_y, int) or not 0 <= ground_y <= canvas[1]:
            raise _manifest_error(f"ground_y must be an int in [0, {canvas[1]}]")

        entries = manifest.get("layers", [])
        if not isinstance(entries, list):
            raise _manifest_error("layers must be a list")
        layers: list[ObjectLayer] = []
        seen: set[str] = set()
        for entry in entries:
            layers.append(_load_layer(reader, entry, seen))

        occlusion = manifest.get("occlusion")
        pairs: Optional[list[tuple[str, str]]] = None
        if occlusion is not None:
            if not isinstance(occlusion, list):
                raise _manifest_error("occlusion must be a list of [occluded, occluder] pairs")
            pairs = []
            for item in occlusion:
                if (not isinstance(item, list) or len(item) != 2
                        or not all(isinstance(s, str) for s in item)):
                    raise _manifest_error(f"bad occlusion pair {item!r}")
                for ref in item:
                    if ref not in seen:
                        raise _manifest_error(
                            f"occlusion pair {item} references unknown layer {ref!r}")
                pairs.append((item[0], item[1]))

        constraints = manifest.get("constraints")
        if constraints is not None and not isinstance(constraints, list):
            raise _manifest_error("constraints must be a list")

        return Environment(
            canvas=canvas,
            background=background,
            layers=layers,
            stacking=[l.id for l in layers],
            ground_y=ground_y,
            round=0,
            explicit_occlusion=pairs,
            constraints=constraints,
        )
    finally:
        reader.close()


def _load_layer(reader: _BundleReader, entry: Any, seen: set[str]) -> ObjectLayer:
    if not isinstance(entry, dict):
        raise _manifest_error(f"layer entry must be an object, got {entry!r}")
    layer_id = entry.get("id")
    if not isinstance(layer_id, str) or not layer_id:
        raise _manifest_error(f"layer entry missing string id: {entry!r}")
    if layer_id in seen:
        raise DuplicateLayerId(f"duplicate layer id {layer_id!r}", layer_id=layer_id)
    seen.add(layer_id)

    name = entry.get("name", layer_id)
    amodal_path = entry.get("amodal")
    if not isinstance(amodal_path, str):
        raise _manifest_error(f"layer {layer_id!r}: amodal must be a path string")
    amodal = Raster.from_png_bytes(reader.read(amodal_path))

    offset_spec = entry.get("offset", [0, 0])
    if (not isinstance(offset_spec, list) or len(offset_spec) != 2
            or not all(isinstance(v, int) for v in offset_spec)):
        raise _manifest_error(f"layer {layer_id!r}: offset must be [x, y] ints")

    visible_mask = None
    if entry.get("visible_mask") is not None:
        vm_path = entry["visible_mask"]
        if not isinstance(vm_path, str):
            raise _manifest_error(f"layer {layer_id!r}: visible_mask must be a path")
        visible_mask = Mask.from_png_bytes(reader.read(vm_path))
        if visible_mask.bits.shape != (amodal.height, amodal.width):
            raise _manifest_error(
                f"layer {layer_id!r}: visible_mask is "
                f"{visible_mask.width}x{visible_mask.height}, amodal is "
                f"{amodal.width}x{amodal.height}")
        stray = int((visible_mask.bits & ~(amodal.alpha > 0)).sum())
        if stray:
            raise MaskOutOfBounds(
                f"layer {layer_id!r}: {stray} visible_mask pixel(s) outside "
                f"the amodal mask", layer_id=layer_id, pixels=stray)

    depth_hint = entry.get("depth_hint")
    if depth_hint is not None and not isinstance(depth_hint, (int, float)):
        raise _manifest_error(f"layer {layer_id!r}: depth_hint must be numeric")
    scale = entry.get("scale", 1.0)
    if not isinstance(scale, (int, float)) or scale <= 0:
        raise _manifest_error(f"layer {layer_id!r}: scale must be > 0")

    return ObjectLayer.from_raster(
        layer_id,
        str(name),
        amodal,
        visible_mask=visible_mask,
        offset=(offset_spec[0], offset_spec[1]),
        depth_hint=float(depth_hint) if depth_hint is not None else None,
        scale=float(scale),
        affected_by_gravity=bool(entry.get("affected_by_gravity", True)),
        anchored=bool(entry.get("anchored", False)),
    )


def save_bundle(env: Environment, path: str | Path) -> None:
    """Write the environment as a loadable bundle.

    Current transforms (offset, scale) are recorded in the manifest; hidden
    layers are dropped, so a REMOVE becomes permanent in the exported scene.
    Loading the result reproduces rasters, masks, offsets, and manifest
    fields bit-exactly.
    """
    target = Path(path)
    entries = []
    assets: list[tuple[str, bytes]] = [("background.png", env.background.to_png_bytes())]
    for layer in env.layers:
        if not layer.visible:
            continue
        entry: dict[str, Any] = {
            "id": layer.id,
            "name": layer.name,
            "amodal": f"layers/{layer.id}.png",
            "offset": [layer.offset[0], layer.offset[1]],
        }
        assets.append((entry["amodal"], layer.amodal.to_png_bytes()))
        if layer.visible_mask is not None:
            entry["visible_mask"] = f"masks/{layer.id}.png"
            assets.append((entry["visible_mask"], layer.visible_mask.to_png_bytes()))
        if layer.depth_hint is not None:
            entry["depth_hint"] = layer.depth_hint
        if layer.scale != 1.0:
            entry["scale"] = layer.scale
        if not layer.affected_by_gravity:
            entry["affected_by_gravity"] = False
        if layer.anchored:
            entry["anchored"] = True
        entries.append(entry)

    manifest: dict[str, Any] = {
        "version": BUNDLE_VERSION,
        "canvas": {"width": env.canvas[0], "height": env.canvas[1]},
        "background": "background.png",
        "ground_y": env.ground_y,
        "layers": entries,
    }
    visible_ids = {l.id for l in env.layers if l.visible}
    pairs = None
    if env.occlusion is not None:
        pairs = env.occlusion.hard_pairs()
    elif env.explicit_occlusion is not None:
        pairs = env.explicit_occlusion
    if pairs is not None:
        manifest["occlusion"] = [
            [a, b] for a, b in pairs if a in visible_ids and b in visible_ids
        ]
    if env.constraints is not None:
        manifest["constraints"] = env.constraints

    payload = json.dumps(manifest, indent=2, sort_keys=False).encode("utf-8")
    try:
        if target.suffix == ".zip":
            target.parent.mkdir(parents=True, exist_ok=True)
            with zipfile.ZipFile(target, "w", zipfile.ZIP_DEFLATED) as zf:
                zf.writestr("manifest.json", payload)
                for rel, raw in assets:
                    zf.writestr(rel, raw)
        else:
            target.mkdir(parents=True, exist_ok=True)
            (target / "manifest.json").write_bytes(payload)
            for rel, raw in assets:
                dest = target / rel
                dest.parent.mkdir(parents=True, exist_ok=True)
                dest.write_bytes(raw)
    except OSError as exc:
        raise IoFailure(f"cannot write bundle to {target}: {exc}", path=str(target)) from exc
