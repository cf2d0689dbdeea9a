"""layerstage: deterministic editing of images as stacks of amodal layers."""

from .actions import (
    ActionRecord,
    AtomicAction,
    Edit,
    Fall,
    Insert,
    Keep,
    Move,
    Remove,
    Resize,
    Retouch,
    parse_script,
    serialize_actions,
)
from .engine import execute, replay, run_round, undo, validate_action
from .errors import LayerStageError
from .metrics import csr, drift_series, ic_score, lpips_u, ms_score, pc_score, spatial_accuracy
from .model import (
    Environment,
    Mask,
    ObjectLayer,
    Raster,
    load_bundle,
    save_bundle,
    state_digest,
    validate,
)
from .ordering import (
    OcclusionGraph,
    derive_hard_constraints,
    derive_soft_constraints,
    order_environment,
    propagate,
    stacking_order,
)
from .physics import PhysicsReport, SupportGraph, apply_gravity, check_balance, infer_support
from .render import RenderOptions, composite, composite_mask
from .synth import StubSynthesizer, Synthesizer

__version__ = "0.1.0"

__all__ = [
    "ActionRecord",
    "AtomicAction",
    "Edit",
    "Environment",
    "Fall",
    "Insert",
    "Keep",
    "LayerStageError",
    "Mask",
    "Move",
    "ObjectLayer",
    "OcclusionGraph",
    "PhysicsReport",
    "Raster",
    "Remove",
    "RenderOptions",
    "Resize",
    "Retouch",
    "StubSynthesizer",
    "SupportGraph",
    "Synthesizer",
    "apply_gravity",
    "check_balance",
    "composite",
    "composite_mask",
    "csr",
    "derive_hard_constraints",
    "derive_soft_constraints",
    "drift_series",
    "execute",
    "ic_score",
    "infer_support",
    "load_bundle",
    "lpips_u",
    "ms_score",
    "order_environment",
    "parse_script",
    "pc_score",
    "propagate",
    "replay",
    "run_round",
    "save_bundle",
    "serialize_actions",
    "spatial_accuracy",
    "stacking_order",
    "state_digest",
    "undo",
    "validate",
    "validate_action",
]
