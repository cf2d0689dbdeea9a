"""Exception hierarchy shared across the engine.

Every domain error carries a stable machine-readable ``code`` so the CLI and
the HTTP service can surface identical error identifiers.
"""

from __future__ import annotations


class LayerStageError(Exception):
    """Base class for all engine errors."""

    code = "error"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_json(self) -> dict:
        out = {"error": self.code, "message": self.message}
        if self.details:
            out["details"] = {k: v for k, v in self.details.items() if v is not None}
        return out


# -- bundle / model -----------------------------------------------------------

class MalformedManifest(LayerStageError):
    code = "malformed_manifest"


class VersionUnsupported(LayerStageError):
    code = "version_unsupported"


class MissingAsset(LayerStageError):
    code = "missing_asset"


class DuplicateLayerId(LayerStageError):
    code = "duplicate_layer_id"


class MaskOutOfBounds(LayerStageError):
    code = "mask_out_of_bounds"


class IoFailure(LayerStageError):
    code = "io_failure"


class UnknownLayer(LayerStageError):
    code = "unknown_layer"


# -- ordering -----------------------------------------------------------------

class HardConstraintCycle(LayerStageError):
    code = "hard_constraint_cycle"


# -- physics ------------------------------------------------------------------

class NoLandingSurface(LayerStageError):
    code = "no_landing_surface"


# -- action parsing -----------------------------------------------------------

class ParseError(LayerStageError):
    code = "parse_error"

    def __init__(self, message: str, line: int | None = None, **details):
        super().__init__(message, line=line, **details)
        self.line = line

    def __str__(self):
        if self.line is not None:
            return f"line {self.line}: {self.message}"
        return self.message


class UnknownVerb(ParseError):
    code = "unknown_verb"


class ArityMismatch(ParseError):
    code = "arity_mismatch"


class NonNumericParam(ParseError):
    code = "non_numeric_param"


class InvalidActionParam(LayerStageError, ValueError):
    """Raised when an action is constructed with an out-of-range parameter."""

    code = "invalid_action_param"


# -- execution / session ------------------------------------------------------

class SynthesizerUnavailable(LayerStageError):
    code = "synthesizer_unavailable"


class NothingToUndo(LayerStageError):
    code = "nothing_to_undo"


class PlannerUnreachable(LayerStageError):
    code = "planner_unreachable"


class PlannerMalformedReply(LayerStageError):
    code = "planner_malformed_reply"


# -- rendering ----------------------------------------------------------------

class InvalidStacking(LayerStageError):
    code = "invalid_stacking"


# -- metrics ------------------------------------------------------------------

class SizeMismatch(LayerStageError):
    code = "size_mismatch"


class EmptyConstraintSet(LayerStageError):
    code = "empty_constraint_set"


class EmptyRequestSet(LayerStageError):
    code = "empty_request_set"


# -- service ------------------------------------------------------------------

class SessionNotFound(LayerStageError):
    code = "session_not_found"


class RoundOutOfRange(LayerStageError):
    code = "round_out_of_range"


class BundleInvalid(LayerStageError):
    code = "bundle_invalid"
