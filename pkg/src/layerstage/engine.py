"""Action execution, the multi-round session log, and undo-by-replay.

Execution is atomic per action: every action either commits fully or is
recorded as a rejection that leaves the environment digest untouched.
Geometric actions (REMOVE, MOVE, RESIZE, FALL) optionally trigger the
gravity pass; any generated FALLs are executed immediately and logged with
``physics`` provenance in the same undo group as the triggering action.

Undo never inverts operators (REMOVE and EDIT are not locally invertible);
it replays the retained log against the frozen baseline snapshot, which is
always correct because every step is deterministic.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional

from .actions import (
    ActionRecord,
    AtomicAction,
    Edit,
    Fall,
    Insert,
    Keep,
    Move,
    PROVENANCE_PHYSICS,
    PROVENANCE_USER,
    RESULT_APPLIED,
    RESULT_REJECTED,
    Remove,
    Resize,
    Retouch,
    split_relation,
)
from .errors import LayerStageError, NothingToUndo, SynthesizerUnavailable
from .model import Environment, ObjectLayer, state_digest
from .ordering import insert_into_graph, order_environment, remove_from_graph
from .physics import PhysicsReport, apply_gravity
from .synth import Synthesizer

GEOMETRIC_VERBS = frozenset({"REMOVE", "MOVE", "RESIZE", "FALL"})


@dataclass
class Validation:
    ok: bool
    reason: Optional[str] = None
    note: Optional[str] = None


@dataclass
class RoundReport:
    round: int
    records: list[ActionRecord] = field(default_factory=list)
    physics: list[PhysicsReport] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "round": self.round,
            "records": [r.to_json() for r in self.records],
            "physics": [p.as_dict() for p in self.physics],
        }


def validate_action(env: Environment, action: AtomicAction) -> Validation:
    """Static checks against the current environment; rejections are data."""
    if isinstance(action, Insert):
        kind, ref = split_relation(action.layer_relation)
        if kind in ("front_of", "behind"):
            if not ref or not env.has_layer(ref):
                return Validation(False, f"unknown relation target {ref!r}")
            if not env.layer(ref).visible:
                return Validation(False, f"relation target {ref!r} is hidden")
        note = _clamp_note(env, action.x, action.y)
        return Validation(True, note=note)

    object_id = getattr(action, "object_id", None)
    if object_id is None or not env.has_layer(object_id):
        return Validation(False, f"unknown object {object_id!r}")
    if isinstance(action, Move):
        return Validation(True, note=_clamp_note(env, action.x, action.y))
    return Validation(True)


def _clamp_note(env: Environment, x: float, y: float) -> Optional[str]:
    cw, ch = env.canvas
    if 0 <= x <= cw and 0 <= y <= ch:
        return None
    return (f"center ({x:g}, {y:g}) clamped to canvas "
            f"({min(max(x, 0), cw):g}, {min(max(y, 0), ch):g})")


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def _apply(env: Environment, action: AtomicAction, synthesizer: Optional[Synthesizer]) -> None:
    """Mutate the environment with one validated action's direct effect."""
    if isinstance(action, Remove):
        layer = env.layer(action.object_id)
        layer.visible = False
        if layer.id in env.stacking:
            env.stacking.remove(layer.id)
        if env.occlusion is not None and layer.id in env.occlusion.ids:
            env.occlusion = remove_from_graph(env.occlusion, layer.id)
    elif isinstance(action, Move):
        layer = env.layer(action.object_id)
        cw, ch = env.canvas
        cx = min(max(action.x, 0.0), float(cw))
        cy = min(max(action.y, 0.0), float(ch))
        w, h = layer.scaled_size()
        layer.offset = (_round_half_up(cx - w / 2.0), _round_half_up(cy - h / 2.0))
    elif isinstance(action, Keep):
        pass
    elif isinstance(action, Fall):
        layer = env.layer(action.object_id)
        layer.offset = (layer.offset[0], layer.offset[1] + _round_half_up(action.delta_y))
    elif isinstance(action, Resize):
        layer = env.layer(action.object_id)
        x, y, w, h = layer.bbox()
        cx, cy = x + w / 2.0, y + h / 2.0
        layer.scale *= action.scale
        nw, nh = layer.scaled_size()
        layer.offset = (_round_half_up(cx - nw / 2.0), _round_half_up(cy - nh / 2.0))
    elif isinstance(action, Retouch):
        layer = env.layer(action.object_id)
        layer.attributes.compose(action.brightness, action.contrast,
                                 action.color, action.sharpness)
    elif isinstance(action, Edit):
        if synthesizer is None or not synthesizer.can_edit:
            raise SynthesizerUnavailable("EDIT requires a synthesizer with can_edit")
        layer = env.layer(action.object_id)
        alpha = layer.amodal.data[:, :, 3].copy()
        try:
            result = synthesizer.edit(layer.amodal, layer.amodal_mask,
                                      action.prompt, action.edit_type)
        except ValueError as exc:
            raise SynthesizerUnavailable(str(exc)) from exc
        if result.data.shape != layer.amodal.data.shape:
            raise SynthesizerUnavailable(
                "synthesizer changed the raster shape during EDIT")
        result.data[:, :, 3] = alpha  # amodal coverage is inviolable
        layer.amodal = result
        layer.refresh_amodal_mask()
    elif isinstance(action, Insert):
        _apply_insert(env, action, synthesizer)
    else:  # pragma: no cover
        raise LayerStageError(f"unhandled action verb {action.verb}")


def _slugify(prompt: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "_", prompt.lower()).strip("_")
    return slug[:24] or "insert"


def _apply_insert(env: Environment, action: Insert, synthesizer: Optional[Synthesizer]) -> None:
    if synthesizer is None or not synthesizer.can_insert:
        raise SynthesizerUnavailable("INSERT requires a synthesizer with can_insert")
    if env.occlusion is None:
        # INSERT integrates through constraint re-propagation; make sure the
        # ordering pass has produced a graph to extend.
        order_environment(env)

    width = max(1, _round_half_up(action.width))
    height = max(1, _round_half_up(action.height))
    raster = synthesizer.insert(action.prompt, width, height)
    if (raster.width, raster.height) != (width, height):
        raise SynthesizerUnavailable(
            f"synthesizer returned {raster.width}x{raster.height}, "
            f"requested {width}x{height}")

    base = _slugify(action.prompt)
    new_id = base
    k = 2
    while env.has_layer(new_id):
        new_id = f"{base}_{k}"
        k += 1

    cw, ch = env.canvas
    cx = min(max(action.x, 0.0), float(cw))
    cy = min(max(action.y, 0.0), float(ch))
    layer = ObjectLayer.from_raster(
        new_id, action.prompt, raster,
        offset=(_round_half_up(cx - width / 2.0), _round_half_up(cy - height / 2.0)),
    )
    env.layers.append(layer)

    kind, ref = split_relation(action.layer_relation)
    graph = env.occlusion
    if kind == "frontmost":
        front_of, behind = list(graph.ids), []
    elif kind == "backmost":
        front_of, behind = [], list(graph.ids)
    elif kind == "front_of":
        front_of, behind = [ref], []
    else:
        front_of, behind = [], [ref]
    new_graph = insert_into_graph(graph, new_id, front_of=front_of, behind=behind)

    from .ordering import stacking_order  # local import avoids cycle at module load

    stacking_order(new_graph, env)


def execute(
    env: Environment,
    action: AtomicAction,
    synthesizer: Optional[Synthesizer] = None,
    provenance: str = PROVENANCE_USER,
    auto_gravity: bool = True,
) -> tuple[ActionRecord, Optional[PhysicsReport]]:
    """Validate, apply, and log one action; never leaves a partial state.

    Returns the action's own record plus the gravity report when the pass
    ran; physics-generated FALL records are appended to the log in the same
    group as the triggering action.
    """
    pre = state_digest(env)
    group = (env.action_log[-1].group + 1) if env.action_log else 1
    validation = validate_action(env, action)
    if not validation.ok:
        record = ActionRecord(action, provenance, env.round, RESULT_REJECTED,
                              reason=validation.reason,
                              pre_state_digest=pre, post_state_digest=pre,
                              group=group)
        env.action_log.append(record)
        return record, None

    work = env.clone()
    try:
        _apply(work, action, synthesizer)
    except LayerStageError as exc:
        record = ActionRecord(action, provenance, env.round, RESULT_REJECTED,
                              reason=exc.message,
                              pre_state_digest=pre, post_state_digest=pre,
                              group=group)
        env.action_log.append(record)
        return record, None

    _commit(env, work)
    record = ActionRecord(action, provenance, env.round, RESULT_APPLIED,
                          reason=validation.note,
                          pre_state_digest=pre, post_state_digest=state_digest(env),
                          group=group)
    env.action_log.append(record)

    report = None
    if auto_gravity and action.verb in GEOMETRIC_VERBS and provenance != PROVENANCE_PHYSICS:
        report = apply_gravity(env)
        for fall in report.generated_actions:
            fall_pre = state_digest(env)
            layer = env.layer(fall.object_id)
            layer.offset = (layer.offset[0],
                            layer.offset[1] + _round_half_up(fall.delta_y))
            env.action_log.append(ActionRecord(
                fall, PROVENANCE_PHYSICS, env.round, RESULT_APPLIED,
                pre_state_digest=fall_pre, post_state_digest=state_digest(env),
                group=group))
    return record, report


def _commit(env: Environment, work: Environment) -> None:
    env.background = work.background
    env.layers = work.layers
    env.stacking = work.stacking
    env.occlusion = work.occlusion


def run_round(
    env: Environment,
    actions: list[AtomicAction],
    synthesizer: Optional[Synthesizer] = None,
    provenance: str = PROVENANCE_USER,
    auto_gravity: bool = True,
) -> RoundReport:
    """Execute one round of actions in order; rejections do not abort it."""
    env.round += 1
    report = RoundReport(round=env.round)
    mark = len(env.action_log)
    for action in actions:
        _, physics = execute(env, action, synthesizer=synthesizer,
                             provenance=provenance, auto_gravity=auto_gravity)
        if physics is not None:
            report.physics.append(physics)
    report.records = list(env.action_log[mark:])
    return report


def replay(
    env: Environment,
    upto_round: Optional[int] = None,
    upto_index: Optional[int] = None,
    synthesizer: Optional[Synthesizer] = None,
) -> Environment:
    """Rebuild state by re-applying the applied log onto the baseline.

    Physics FALLs are already explicit records, so gravity is not re-run.
    """
    if env.baseline is None:
        raise NothingToUndo("environment has no frozen baseline to replay from")
    fresh = env.baseline.clone()
    fresh.freeze_baseline()
    top_round = 0
    log = env.action_log if upto_index is None else env.action_log[:upto_index]
    for record in log:
        if upto_round is not None and record.round > upto_round:
            break
        fresh.action_log.append(record)
        top_round = max(top_round, record.round)
        if not record.applied:
            continue
        _apply(fresh, record.action, synthesizer)
    fresh.round = top_round if upto_round is None else max(upto_round, 0)
    return fresh


def undo(env: Environment, k: int, synthesizer: Optional[Synthesizer] = None) -> Environment:
    """Drop the last k non-physics action groups and rebuild by replay."""
    if k <= 0:
        raise NothingToUndo("undo count must be positive")
    user_groups = sorted({
        r.group for r in env.action_log
        if r.applied and r.provenance != PROVENANCE_PHYSICS
    })
    if k > len(user_groups):
        raise NothingToUndo(
            f"cannot undo {k} action(s); only {len(user_groups)} applied")
    dropped = set(user_groups[len(user_groups) - k:])
    cut = min(i for i, r in enumerate(env.action_log) if r.group in dropped)
    return replay(env, upto_index=cut, synthesizer=synthesizer)
