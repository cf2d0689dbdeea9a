"""Deterministic support/gravity/balance rules over raster masks.

All geometry is column-scan based on the transformed canvas-space amodal
masks: per canvas column, an object's underside is its lowest set row and a
surface's top is its highest set row.  Contact and landing distances are
exact for binary masks and cheap to compute.

Tunables (tested defaults): contact tolerance EPSILON = 2 px, minimum
horizontal overlap fraction RHO = 0.1 of the narrower object, balance
margin MU = 5% of the object's width.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .actions import Fall
from .errors import NoLandingSurface
from .model import Environment, ObjectLayer

EPSILON = 2          # px: vertical contact tolerance
RHO = 0.1            # fraction: horizontal overlap required for support
BALANCE_MARGIN = 0.05  # fraction of object width added around the base

RULE_GRAVITY = "Gravity"
RULE_SUPPORT = "Support"
RULE_BALANCE = "Balance"


@dataclass
class SupportGraph:
    """Directed rest-on relation: (supported_id, supporter_id) pairs."""

    edges: set[tuple[str, str]] = field(default_factory=set)
    ground_supported: set[str] = field(default_factory=set)

    def supporters_of(self, layer_id: str) -> set[str]:
        return {x for y, x in self.edges if y == layer_id}

    def supports(self, layer_id: str) -> set[str]:
        return {y for y, x in self.edges if x == layer_id}

    def is_supported(self, layer_id: str) -> bool:
        return layer_id in self.ground_supported or bool(self.supporters_of(layer_id))

    def as_dict(self) -> dict:
        return {
            "edges": sorted([list(e) for e in self.edges]),
            "ground_supported": sorted(self.ground_supported),
        }


@dataclass
class Violation:
    layer_id: str
    rule: str
    message: str

    def as_dict(self) -> dict:
        return {"layer_id": self.layer_id, "rule": self.rule, "message": self.message}


@dataclass
class PhysicsReport:
    support: SupportGraph
    generated_actions: list[Fall] = field(default_factory=list)
    violations: list[Violation] = field(default_factory=list)
    affected_objects: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "support": self.support.as_dict(),
            "generated_actions": [a.to_record() for a in self.generated_actions],
            "violations": [v.as_dict() for v in self.violations],
            "affected_objects": self.affected_objects,
        }


# -- column geometry ----------------------------------------------------------

class _Profile:
    """Per-column top/bottom rows of one layer's canvas-space mask."""

    def __init__(self, layer: ObjectLayer, canvas: tuple[int, int]):
        mask = layer.canvas_mask(canvas)
        occupied = mask.any(axis=0)
        height = mask.shape[0]
        self.id = layer.id
        self.occupied = occupied
        self.empty = not occupied.any()
        if self.empty:
            self.top = np.full(mask.shape[1], -1)
            self.bottom = np.full(mask.shape[1], -1)
            self.x0 = self.x1 = 0
            return
        self.top = np.where(occupied, mask.argmax(axis=0), -1)
        self.bottom = np.where(occupied, height - 1 - mask[::-1].argmax(axis=0), -1)
        cols = np.nonzero(occupied)[0]
        self.x0, self.x1 = int(cols[0]), int(cols[-1])  # inclusive extent

    @property
    def width(self) -> int:
        return self.x1 - self.x0 + 1

    @property
    def lowest_row(self) -> int:
        return int(self.bottom.max())


def _profiles(env: Environment) -> dict[str, _Profile]:
    return {l.id: _Profile(l, env.canvas) for l in env.visible_layers()}


def _contact_gap(upper: _Profile, lower: _Profile) -> Optional[int]:
    """min over shared columns of (top of lower - bottom of upper); None if disjoint."""
    shared = upper.occupied & lower.occupied
    if not shared.any():
        return None
    return int((lower.top[shared] - upper.bottom[shared]).min())


def _rests_on(upper: _Profile, lower: _Profile, epsilon: int, rho: float) -> bool:
    overlap = min(upper.x1, lower.x1) - max(upper.x0, lower.x0) + 1
    if overlap < rho * min(upper.width, lower.width):
        return False
    gap = _contact_gap(upper, lower)
    return gap is not None and -epsilon <= gap <= epsilon


def _on_ground(profile: _Profile, ground_y: int, epsilon: int) -> bool:
    # Within epsilon above the ground plane, or already at/under it.
    return not profile.empty and ground_y - profile.lowest_row <= epsilon


def infer_support(
    env: Environment,
    epsilon: int = EPSILON,
    rho: float = RHO,
) -> SupportGraph:
    """Build the rest-on graph for the current environment state.

    Y rests on X when their horizontal extents overlap by at least
    ``rho * min(width)`` and the minimum column gap between Y's underside
    and X's top is within ``epsilon``.  Anchored layers never appear on the
    supported side; they may still act as supporters.
    """
    graph = SupportGraph()
    profiles = _profiles(env)
    for upper in env.visible_layers():
        if upper.anchored:
            continue
        up = profiles[upper.id]
        if up.empty:
            continue
        if _on_ground(up, env.ground_y, epsilon):
            graph.ground_supported.add(upper.id)
        for lower in env.visible_layers():
            if lower.id == upper.id:
                continue
            if _rests_on(up, profiles[lower.id], epsilon, rho):
                graph.edges.add((upper.id, lower.id))
    return graph


def fall_distance(env: Environment, layer: ObjectLayer) -> int:
    """Pixels the layer can drop before touching the nearest surface below.

    Per occupied column, the candidate gap is the distance from the layer's
    underside to the top of the closest other visible layer strictly below,
    or to the ground plane; the fall distance is the minimum over columns.
    """
    profiles = _profiles(env)
    me = profiles[layer.id]
    if me.empty:
        return 0
    others = [p for lid, p in profiles.items() if lid != layer.id]
    best: Optional[int] = None
    for col in np.nonzero(me.occupied)[0]:
        bottom = int(me.bottom[col])
        gap = env.ground_y - bottom - 1
        for other in others:
            if other.occupied[col] and other.top[col] > bottom:
                gap = min(gap, int(other.top[col]) - bottom - 1)
        best = gap if best is None else min(best, gap)
    if best is None:  # occupied columns guarantee at least the ground candidate
        raise NoLandingSurface(f"layer {layer.id!r} has no surface below",
                               layer_id=layer.id)
    return max(0, best)


def _falling_candidates(env: Environment, support: SupportGraph) -> list[ObjectLayer]:
    out = []
    for layer in env.visible_layers():
        if not layer.affected_by_gravity or layer.anchored:
            continue
        if support.is_supported(layer.id):
            continue
        out.append(layer)
    return out


def apply_gravity(env: Environment, support: Optional[SupportGraph] = None) -> PhysicsReport:
    """Compute the FALL actions gravity implies for the current state.

    Pure analysis: runs the settle loop on a scratch copy and reports the
    generated actions in execution order; the caller applies them to the
    live environment.  Each iteration drops every unsupported, gravity
    affected, non-anchored layer onto the nearest surface below (lowest
    layers first so stacks settle quickly) and re-infers support; the loop
    reaches a fixpoint within the layer count.
    """
    work = env.clone()
    support = support if support is not None else infer_support(work)
    generated: list[Fall] = []
    affected: list[str] = []

    for _ in range(max(1, len(work.layers))):
        candidates = _falling_candidates(work, support)
        moved = False
        candidates.sort(key=lambda l: (-_Profile(l, work.canvas).lowest_row, l.id))
        for layer in candidates:
            delta = fall_distance(work, layer)
            if delta <= 0:
                continue  # touching already; support merely failed the overlap test
            layer.offset = (layer.offset[0], layer.offset[1] + delta)
            generated.append(Fall(object_id=layer.id, delta_y=float(delta)))
            if layer.id not in affected:
                affected.append(layer.id)
            moved = True
        if not moved:
            break
        support = infer_support(work)

    report = PhysicsReport(
        support=support,
        generated_actions=generated,
        affected_objects=affected,
    )
    report.violations.extend(_gravity_warnings(work, support))
    return report


def _gravity_warnings(env: Environment, support: SupportGraph) -> list[Violation]:
    out = []
    for layer in env.visible_layers():
        if layer.anchored:
            continue
        if support.is_supported(layer.id) or not layer.affected_by_gravity:
            continue
        out.append(Violation(
            layer.id, RULE_SUPPORT,
            f"{layer.id} rests without a qualifying support "
            f"(contact present but overlap below {RHO:.0%}, or none at all)"))
    return out


def check_balance(
    env: Environment,
    support: SupportGraph,
    epsilon: int = EPSILON,
    margin_fraction: float = BALANCE_MARGIN,
) -> list[Violation]:
    """Warn when a supported layer's center of mass leaves its support base.

    The base is the union of contact-column intervals over all supporters
    plus ground contact, widened by ``margin_fraction`` of the layer's own
    width.  Warnings only; the engine never simulates toppling.
    """
    profiles = _profiles(env)
    out: list[Violation] = []
    for layer in env.visible_layers():
        me = profiles.get(layer.id)
        if me is None or me.empty:
            continue
        supporters = support.supporters_of(layer.id)
        grounded = layer.id in support.ground_supported
        if not supporters and not grounded:
            continue

        base_min: Optional[float] = None
        base_max: Optional[float] = None

        def widen(c0: float, c1: float):
            nonlocal base_min, base_max
            base_min = c0 if base_min is None else min(base_min, c0)
            base_max = c1 if base_max is None else max(base_max, c1)

        for sup_id in supporters:
            other = profiles.get(sup_id)
            if other is None:
                continue
            shared = me.occupied & other.occupied
            contact = shared & (np.abs(other.top - me.bottom) <= epsilon)
            cols = np.nonzero(contact)[0]
            if cols.size:
                widen(float(cols[0]), float(cols[-1] + 1))
        if grounded:
            contact = me.occupied & (env.ground_y - me.bottom <= epsilon)
            cols = np.nonzero(contact)[0]
            if cols.size:
                widen(float(cols[0]), float(cols[-1] + 1))
        if base_min is None:
            continue

        cols = np.nonzero(me.occupied)[0]
        weights = (me.bottom[cols] - me.top[cols] + 1).astype(np.float64)
        com_x = float(((cols + 0.5) * weights).sum() / weights.sum())
        mu = margin_fraction * me.width
        if com_x < base_min - mu or com_x > base_max + mu:
            out.append(Violation(
                layer.id, RULE_BALANCE,
                f"center of mass x={com_x:.1f} outside support base "
                f"[{base_min:.1f}, {base_max:.1f}] ± {mu:.1f}"))
    return out


def analyze(env: Environment) -> PhysicsReport:
    """Full diagnostic pass: support, pending gravity falls, balance warnings."""
    support = infer_support(env)
    report = apply_gravity(env, support)
    report.support = support  # report the pre-settle graph for inspection
    settled = env.clone()
    for fall in report.generated_actions:
        layer = settled.layer(fall.object_id)
        layer.offset = (layer.offset[0], layer.offset[1] + int(fall.delta_y))
    report.violations.extend(check_balance(settled, infer_support(settled)))
    return report
