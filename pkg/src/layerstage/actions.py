"""Atomic editing actions: the typed action space plus both wire formats.

Two input forms parse to the same action objects:

* JSON — ``{"action_sequence": [{"action": "MOVE", "object_id": "lamp",
  "x": 420, "y": 310, "reason": "..."}]}``.  Unknown record fields (such as
  ``reason``) are preserved on ``action.meta`` and survive serialization.
* one-line DSL — ``MOVE lamp 420 310``, ``INSERT "a red ball" 40 40 16 16
  frontmost``.  Verbs are case-insensitive; quoted strings follow shell rules.

Coordinates are canvas pixels, origin at the top-left, x rightward,
y downward.
"""

from __future__ import annotations

import json
import shlex
from dataclasses import dataclass, field, fields
from typing import Any, Iterable

from .errors import (
    ArityMismatch,
    InvalidActionParam,
    NonNumericParam,
    ParseError,
    UnknownVerb,
)

PROVENANCE_USER = "user"
PROVENANCE_PLANNER = "planner"
PROVENANCE_PHYSICS = "physics"

LAYER_RELATIONS = ("frontmost", "backmost", "front_of", "behind")
EDIT_TYPES = ("recolor", "texture", "style")


@dataclass(frozen=True)
class AtomicAction:
    """Base class; concrete actions define VERB and their parameter fields."""

    VERB = ""

    @property
    def verb(self) -> str:
        return self.VERB

    def params(self) -> dict[str, Any]:
        """Parameter dict in wire order, metadata excluded."""
        out = {}
        for f in fields(self):
            if f.name == "meta":
                continue
            out[f.name] = getattr(self, f.name)
        return out

    def to_record(self) -> dict[str, Any]:
        rec: dict[str, Any] = {"action": self.verb}
        rec.update(self.params())
        rec.update(getattr(self, "meta", {}))
        return rec


def _require_number(value, name: str):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidActionParam(f"{name} must be numeric, got {value!r}")
    return float(value)


@dataclass(frozen=True)
class Remove(AtomicAction):
    VERB = "REMOVE"
    object_id: str = ""
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Move(AtomicAction):
    VERB = "MOVE"
    object_id: str = ""
    x: float = 0.0
    y: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "x", _require_number(self.x, "x"))
        object.__setattr__(self, "y", _require_number(self.y, "y"))


@dataclass(frozen=True)
class Keep(AtomicAction):
    VERB = "KEEP"
    object_id: str = ""
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Fall(AtomicAction):
    VERB = "FALL"
    object_id: str = ""
    delta_y: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        dy = _require_number(self.delta_y, "delta_y")
        if dy < 0:
            raise InvalidActionParam(f"delta_y must be >= 0, got {dy}")
        object.__setattr__(self, "delta_y", dy)


@dataclass(frozen=True)
class Resize(AtomicAction):
    VERB = "RESIZE"
    object_id: str = ""
    scale: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        s = _require_number(self.scale, "scale")
        if s <= 0:
            raise InvalidActionParam(f"scale must be > 0, got {s}")
        object.__setattr__(self, "scale", s)


@dataclass(frozen=True)
class Retouch(AtomicAction):
    VERB = "RETOUCH"
    object_id: str = ""
    brightness: float = 1.0
    contrast: float = 1.0
    color: float = 1.0
    sharpness: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("brightness", "contrast", "color", "sharpness"):
            v = _require_number(getattr(self, name), name)
            if v < 0:
                raise InvalidActionParam(f"{name} must be >= 0, got {v}")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class Edit(AtomicAction):
    VERB = "EDIT"
    object_id: str = ""
    prompt: str = ""
    edit_type: str = "recolor"
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Insert(AtomicAction):
    VERB = "INSERT"
    prompt: str = ""
    x: float = 0.0
    y: float = 0.0
    width: float = 1.0
    height: float = 1.0
    layer_relation: str = "frontmost"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "x", _require_number(self.x, "x"))
        object.__setattr__(self, "y", _require_number(self.y, "y"))
        for name in ("width", "height"):
            v = _require_number(getattr(self, name), name)
            if v <= 0:
                raise InvalidActionParam(f"{name} must be > 0, got {v}")
            object.__setattr__(self, name, v)
        kind, _ = split_relation(self.layer_relation)
        if kind not in LAYER_RELATIONS:
            raise InvalidActionParam(
                f"layer_relation must be one of frontmost, backmost, "
                f"front_of:<id>, behind:<id>; got {self.layer_relation!r}"
            )


def split_relation(relation: str) -> tuple[str, str | None]:
    """Split ``front_of:lamp`` into ``("front_of", "lamp")``."""
    if ":" in relation:
        kind, ref = relation.split(":", 1)
        return kind, ref
    return relation, None


_ACTION_TYPES: dict[str, type[AtomicAction]] = {
    cls.VERB: cls for cls in (Remove, Move, Keep, Fall, Resize, Retouch, Edit, Insert)
}

# DSL positional argument order per verb; numeric args are converted to float.
_DSL_ARGS: dict[str, tuple[str, ...]] = {
    "REMOVE": ("object_id",),
    "MOVE": ("object_id", "x", "y"),
    "KEEP": ("object_id",),
    "FALL": ("object_id", "delta_y"),
    "RESIZE": ("object_id", "scale"),
    "RETOUCH": ("object_id", "brightness", "contrast", "color", "sharpness"),
    "EDIT": ("object_id", "prompt", "edit_type"),
    "INSERT": ("prompt", "x", "y", "width", "height", "layer_relation"),
}

_NUMERIC_ARGS = frozenset(
    {"x", "y", "delta_y", "scale", "brightness", "contrast", "color",
     "sharpness", "width", "height"}
)
_STRING_ARGS = frozenset({"object_id", "prompt", "edit_type", "layer_relation"})


def parse_script(text: str) -> list[AtomicAction]:
    """Parse an action script, JSON or DSL, into ordered atomic actions.

    A document whose first non-blank character is ``{`` is treated as the
    JSON wire format; anything else is read line by line as the DSL.
    """
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return _parse_json(text)
    return _parse_dsl(text)


def _parse_json(text: str) -> list[AtomicAction]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(doc, dict) or "action_sequence" not in doc:
        raise ParseError("top-level object must contain 'action_sequence'")
    seq = doc["action_sequence"]
    if not isinstance(seq, list):
        raise ParseError("'action_sequence' must be an array")
    actions = []
    for idx, rec in enumerate(seq):
        if not isinstance(rec, dict):
            raise ParseError(f"record {idx} is not an object")
        actions.append(_record_to_action(rec, idx))
    return actions


def _record_to_action(rec: dict, idx: int) -> AtomicAction:
    verb = rec.get("action")
    if not isinstance(verb, str):
        raise ParseError(f"record {idx}: missing 'action' field")
    cls = _ACTION_TYPES.get(verb.upper())
    if cls is None:
        raise UnknownVerb(f"record {idx}: unknown action {verb!r}")
    names = _DSL_ARGS[cls.VERB]
    kwargs: dict[str, Any] = {}
    meta: dict[str, Any] = {}
    for key, value in rec.items():
        if key == "action":
            continue
        if key in names:
            kwargs[key] = value
        else:
            meta[key] = value
    missing = [n for n in names if n not in kwargs]
    if missing:
        raise ArityMismatch(
            f"record {idx}: {cls.VERB} missing field(s) {', '.join(missing)}"
        )
    for name in names:
        if name in _NUMERIC_ARGS and isinstance(kwargs[name], bool):
            raise NonNumericParam(f"record {idx}: {name} must be numeric")
        if name in _NUMERIC_ARGS and not isinstance(kwargs[name], (int, float)):
            raise NonNumericParam(f"record {idx}: {name} must be numeric")
        if name in _STRING_ARGS and not isinstance(kwargs[name], str):
            raise ParseError(f"record {idx}: {name} must be a string")
    try:
        return cls(meta=meta, **kwargs)
    except InvalidActionParam as exc:
        raise ParseError(f"record {idx}: {exc.message}") from exc


def _parse_dsl(text: str) -> list[AtomicAction]:
    actions = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            tokens = shlex.split(line)
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from exc
        verb = tokens[0].upper()
        cls = _ACTION_TYPES.get(verb)
        if cls is None:
            raise UnknownVerb(f"unknown verb {tokens[0]!r}", line=lineno)
        names = _DSL_ARGS[verb]
        args = tokens[1:]
        if len(args) != len(names):
            raise ArityMismatch(
                f"{verb} takes {len(names)} argument(s) "
                f"({', '.join(names)}), got {len(args)}",
                line=lineno,
            )
        kwargs: dict[str, Any] = {}
        for name, token in zip(names, args):
            if name in _NUMERIC_ARGS:
                try:
                    kwargs[name] = float(token)
                except ValueError:
                    raise NonNumericParam(
                        f"{verb}: {name} must be numeric, got {token!r}",
                        line=lineno,
                    ) from None
            else:
                kwargs[name] = token
        try:
            actions.append(cls(**kwargs))
        except InvalidActionParam as exc:
            raise ParseError(exc.message, line=lineno) from exc
    return actions


def serialize_actions(actions: Iterable[AtomicAction], indent: int | None = None) -> str:
    """Serialize actions to the JSON wire format; inverse of ``parse_script``."""
    doc = {"action_sequence": [a.to_record() for a in actions]}
    return json.dumps(doc, indent=indent, sort_keys=False)


def action_to_dsl(action: AtomicAction) -> str:
    """Render one action as a DSL line."""
    parts = [action.verb]
    for name in _DSL_ARGS[action.verb]:
        value = getattr(action, name)
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        parts.append(shlex.quote(str(value)) if isinstance(value, str) else str(value))
    return " ".join(parts)


# -- session log records ------------------------------------------------------

RESULT_APPLIED = "applied"
RESULT_REJECTED = "rejected"


@dataclass
class ActionRecord:
    """One append-only log entry: an action plus its outcome and state digests."""

    action: AtomicAction
    provenance: str
    round: int
    result: str
    reason: str | None = None
    pre_state_digest: str = ""
    post_state_digest: str = ""
    group: int = 0  # user/planner actions and their physics children share a group

    @property
    def applied(self) -> bool:
        return self.result == RESULT_APPLIED

    def to_json(self) -> dict:
        out = {
            "action": self.action.to_record(),
            "provenance": self.provenance,
            "round": self.round,
            "result": self.result,
            "pre_state_digest": self.pre_state_digest,
            "post_state_digest": self.post_state_digest,
            "group": self.group,
        }
        if self.reason is not None:
            out["reason"] = self.reason
        return out

    @classmethod
    def from_json(cls, doc: dict) -> "ActionRecord":
        return cls(
            action=_record_to_action(dict(doc["action"]), 0),
            provenance=doc["provenance"],
            round=int(doc["round"]),
            result=doc["result"],
            reason=doc.get("reason"),
            pre_state_digest=doc.get("pre_state_digest", ""),
            post_state_digest=doc.get("post_state_digest", ""),
            group=int(doc.get("group", 0)),
        )
