"""Batch CLI: every engine capability scriptable without the service or UI.

Exit codes: 0 success, 1 domain error (structured JSON on stderr under
``--json``), 2 usage error.  All outputs are deterministic for a fixed
``--seed``.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import engine
from .actions import ActionRecord, parse_script
from .errors import LayerStageError
from .metrics import (
    JudgeFindings,
    csr as csr_metric,
    detections_from_env,
    drift_series,
    ic_score,
    lpips_u,
    ms_score,
    parse_constraints,
    pc_score,
    spatial_accuracy,
)
from .model import Environment, Mask, Raster, load_bundle, save_bundle, state_digest, validate
from .ordering import DEFAULT_DEPTH_MARGIN, order_environment
from .physics import analyze
from .render import RenderOptions, composite, composite_mask
from .synth import StubSynthesizer

BUNDLE_ROOT_ENV = "LAYERSTAGE_BUNDLE_ROOT"


def _resolve(bundle: str) -> Path:
    root = None
    import os

    if os.environ.get(BUNDLE_ROOT_ENV):
        root = Path(os.environ[BUNDLE_ROOT_ENV])
    path = Path(bundle)
    if not path.exists() and root is not None:
        path = root / bundle
    return path


def _emit(doc: dict, as_json: bool, text: str | None = None) -> None:
    if as_json:
        click.echo(json.dumps(doc, indent=2, sort_keys=True))
    else:
        click.echo(text if text is not None else json.dumps(doc, indent=2, sort_keys=True))


def _fail(exc: LayerStageError, as_json: bool) -> None:
    if as_json:
        click.echo(json.dumps(exc.to_json(), sort_keys=True), err=True)
    else:
        click.echo(f"error [{exc.code}]: {exc.message}", err=True)
    sys.exit(1)


def _prepare(bundle: str, margin: float = DEFAULT_DEPTH_MARGIN) -> Environment:
    env = load_bundle(_resolve(bundle))
    order_environment(env, margin=margin)
    env.freeze_baseline()
    return env


@click.group()
def main():
    """Deterministic layered-scene editing engine."""


@main.command("validate")
@click.argument("bundle")
@click.option("--json", "as_json", is_flag=True, help="machine-readable output")
def validate_cmd(bundle, as_json):
    """Load a bundle and report structural invariant violations."""
    try:
        env = load_bundle(_resolve(bundle))
    except LayerStageError as exc:
        _fail(exc, as_json)
    violations = validate(env)
    doc = {"bundle": bundle, "violations": [v.as_dict() for v in violations]}
    if violations:
        _emit(doc, as_json,
              "\n".join(f"{v.layer_id or '-'}: {v.rule}: {v.message}" for v in violations))
        sys.exit(1)
    _emit(doc, as_json, "ok: no violations")


@main.command("order")
@click.argument("bundle")
@click.option("--depth-margin", default=DEFAULT_DEPTH_MARGIN, show_default=True,
              help="soft-constraint margin in depth-hint units")
@click.option("--json", "as_json", is_flag=True)
def order_cmd(bundle, depth_margin, as_json):
    """Derive occlusion constraints and print the stacking order."""
    try:
        env = load_bundle(_resolve(bundle))
        graph = order_environment(env, margin=depth_margin)
    except LayerStageError as exc:
        _fail(exc, as_json)
    doc = graph.as_dict()
    doc["stacking"] = env.stacking
    if as_json:
        _emit(doc, True)
        return
    lines = [f"ids: {', '.join(graph.ids)}"]
    for name in ("hard", "soft", "reach"):
        lines.append(f"{name}:")
        for row in doc[name]:
            lines.append("  " + " ".join(str(v) for v in row))
    lines.append("depth scores: " + ", ".join(
        f"{lid}={doc['scores'][lid]}" for lid in graph.ids))
    lines.append("stacking (front first): " + ", ".join(env.stacking))
    click.echo("\n".join(lines))


@main.command("simulate-gravity")
@click.argument("bundle")
@click.option("--json", "as_json", is_flag=True)
def simulate_gravity_cmd(bundle, as_json):
    """Print support edges, pending falls, and rule violations."""
    try:
        env = load_bundle(_resolve(bundle))
        order_environment(env)
        report = analyze(env)
    except LayerStageError as exc:
        _fail(exc, as_json)
    _emit(report.as_dict(), as_json, json.dumps(report.as_dict(), indent=2, sort_keys=True))


@main.command("exec")
@click.argument("bundle")
@click.option("--script", required=True, type=click.Path(exists=True, path_type=Path),
              help="action script: JSON wire format or one-line DSL")
@click.option("--no-gravity", is_flag=True, help="skip auto gravity after edits")
@click.option("--out", type=click.Path(path_type=Path), help="save resulting bundle here")
@click.option("--log-out", type=click.Path(path_type=Path),
              help="persist the action log as NDJSON")
@click.option("--seed", default=0, show_default=True, help="stub synthesizer seed")
@click.option("--json", "as_json", is_flag=True)
def exec_cmd(bundle, script, no_gravity, out, log_out, seed, as_json):
    """Execute an action script as one round against a bundle."""
    try:
        env = _prepare(bundle)
        actions = parse_script(script.read_text(encoding="utf-8"))
        report = engine.run_round(env, actions, synthesizer=StubSynthesizer(seed=seed),
                                  auto_gravity=not no_gravity)
        if out is not None:
            save_bundle(env, out)
        if log_out is not None:
            log_out.parent.mkdir(parents=True, exist_ok=True)
            with log_out.open("w", encoding="utf-8") as fh:
                for record in env.action_log:
                    fh.write(json.dumps(record.to_json(), sort_keys=True) + "\n")
    except LayerStageError as exc:
        _fail(exc, as_json)
    doc = report.as_dict()
    doc["digest"] = state_digest(env)
    if as_json:
        _emit(doc, True)
        return
    for record in report.records:
        action = record.action
        status = record.result
        extra = f" ({record.reason})" if record.reason else ""
        click.echo(f"[{record.provenance}] {action.verb} "
                   f"{getattr(action, 'object_id', '') or ''} -> {status}{extra}")
    click.echo(f"round {report.round} digest {doc['digest'][:16]}")


@main.command("render")
@click.argument("bundle")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--log", "log_file", type=click.Path(exists=True, path_type=Path),
              help="NDJSON action log to replay before rendering")
@click.option("--round", "round_", type=int, default=None,
              help="render the state after this round (needs --log for > 0)")
@click.option("--highlight", multiple=True, help="outline these layer ids")
@click.option("--seed", default=0, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def render_cmd(bundle, out, log_file, round_, highlight, seed, as_json):
    """Render a bundle (optionally replaying a session log) to a PNG."""
    try:
        env = _prepare(bundle)
        synth = StubSynthesizer(seed=seed)
        if log_file is not None:
            env.action_log = _read_log(log_file)
            env = engine.replay(env, synthesizer=synth)
        if round_ is not None:
            if round_ < 0 or round_ > env.round:
                raise LayerStageError(f"round {round_} outside [0, {env.round}]")
            env = engine.replay(env, upto_round=round_, synthesizer=synth)
        raster = composite(env, RenderOptions(highlight=set(highlight)))
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_bytes(raster.to_png_bytes())
    except LayerStageError as exc:
        _fail(exc, as_json)
    _emit({"out": str(out), "round": env.round, "digest": state_digest(env)},
          as_json, f"wrote {out}")


def _read_log(path: Path) -> list[ActionRecord]:
    records = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            records.append(ActionRecord.from_json(json.loads(line)))
    return records


@main.command("replay")
@click.argument("bundle")
@click.option("--log", "log_file", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--seed", default=0, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def replay_cmd(bundle, log_file, seed, as_json):
    """Rebuild a session from (bundle, log) and verify the recorded digests."""
    try:
        env = _prepare(bundle)
        env.action_log = _read_log(log_file)
        rebuilt = engine.replay(env, synthesizer=StubSynthesizer(seed=seed))
        digest = state_digest(rebuilt)
        applied = [r for r in rebuilt.action_log if r.applied]
        expected = applied[-1].post_state_digest if applied else state_digest(env.baseline)
        ok = digest == expected
    except LayerStageError as exc:
        _fail(exc, as_json)
    doc = {"digest": digest, "expected": expected, "match": ok,
           "records": len(rebuilt.action_log), "round": rebuilt.round}
    _emit(doc, as_json, f"digest {digest[:16]} match={ok}")
    if not ok:
        sys.exit(1)


@main.command("metrics")
@click.argument("bundle")
@click.option("--edited", type=click.Path(exists=True, path_type=Path),
              help="edited PNG, or an edited bundle directory")
@click.option("--constraints", "constraints_file",
              type=click.Path(exists=True, path_type=Path),
              help="JSON constraint list (default: bundle manifest constraints)")
@click.option("--detections-after", type=click.Path(exists=True, path_type=Path),
              help="JSON detections for a PNG-only edited input")
@click.option("--judge", type=click.Path(exists=True, path_type=Path),
              help="judge findings JSON for PC/IC/MS")
@click.option("--mask", "mask_file", type=click.Path(exists=True, path_type=Path),
              help="explicit edit-mask PNG (default: constraint target layers)")
@click.option("--tau", default=0.7, show_default=True)
@click.option("--raw-norm", is_flag=True,
              help="disable the per-level sqrt-count normalization of LPIPS-U")
@click.option("--report", "report_file", type=click.Path(path_type=Path))
@click.option("--json", "as_json", is_flag=True)
def metrics_cmd(bundle, edited, constraints_file, detections_after, judge,
                mask_file, tau, raw_norm, report_file, as_json):
    """Score an edited result against the original bundle."""
    try:
        doc = _run_metrics(bundle, edited, constraints_file, detections_after,
                           judge, mask_file, tau, raw_norm)
    except LayerStageError as exc:
        _fail(exc, as_json)
    if report_file is not None:
        report_file.parent.mkdir(parents=True, exist_ok=True)
        report_file.write_text(json.dumps(doc, indent=2, sort_keys=True))
    _emit(doc, as_json, json.dumps(doc, indent=2, sort_keys=True))


def _run_metrics(bundle, edited, constraints_file, detections_after, judge,
                 mask_file, tau, raw_norm) -> dict:
    from .metrics import Detection

    env = _prepare(bundle)
    original = composite(env)
    doc: dict = {"bundle": str(bundle), "tau": tau}

    constraint_docs = None
    if constraints_file is not None:
        constraint_docs = json.loads(constraints_file.read_text())
    elif env.constraints:
        constraint_docs = env.constraints
    constraints = parse_constraints(constraint_docs) if constraint_docs else []

    edited_env = None
    edited_raster = None
    if edited is not None:
        if edited.is_dir() or edited.suffix == ".zip":
            edited_env = _prepare(str(edited))
            edited_raster = composite(edited_env)
        else:
            edited_raster = Raster.from_png_bytes(edited.read_bytes())

    if edited_raster is not None:
        if mask_file is not None:
            edit_mask = Mask.from_png_bytes(mask_file.read_bytes())
        else:
            edit_mask = _constraint_mask(env, edited_env, constraints)
        doc["lpips_u"] = lpips_u(original, edited_raster, edit_mask,
                                 normalize=not raw_norm)

    if constraints:
        before = detections_from_env(env)
        after = None
        if edited_env is not None:
            after = detections_from_env(edited_env)
        elif detections_after is not None:
            after = [Detection(d["label"], tuple(d["bbox"]), d.get("confidence", 1.0))
                     for d in json.loads(detections_after.read_text())]
        if after is not None:
            doc["sa"] = spatial_accuracy(constraints, before, after, env.canvas)
            doc["csr"] = csr_metric(constraints, before, after, env.canvas, tau=tau)
        else:
            doc["sa"] = doc["csr"] = None
            doc["note"] = "constraints present but no detections for the edited input"

    if judge is not None:
        findings = JudgeFindings.from_json(json.loads(judge.read_text()))
        raw = {"pc": pc_score(findings)}
        if findings.fulfillments:
            raw["ic"] = ic_score(findings)
        if findings.step_successes:
            raw["ms"] = ms_score(findings)
        doc["judge_raw"] = raw
        doc["judge"] = {k: v / 10.0 for k, v in raw.items()}
    return doc


def _constraint_mask(env, edited_env, constraints) -> Mask:
    import numpy as np

    targets = {c.target.lower() for c in constraints}
    bits = np.zeros((env.canvas[1], env.canvas[0]), dtype=bool)
    for source in (env, edited_env):
        if source is None:
            continue
        ids = [l.id for l in source.layers
               if l.name.lower() in targets or l.id.lower() in targets]
        if ids:
            bits |= composite_mask(source, ids).bits
    return Mask(bits)


@main.command("diagnostics")
@click.argument("bundle")
@click.option("--log", "log_file", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--targets", default="", help="comma-separated edited layer ids")
@click.option("--seed", default=0, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def diagnostics_cmd(bundle, log_file, targets, seed, as_json):
    """Per-round drift series for a persisted session log."""
    try:
        env = _prepare(bundle)
        env.action_log = _read_log(log_file)
        synth = StubSynthesizer(seed=seed)
        env = engine.replay(env, synthesizer=synth)
        ids = [t for t in targets.split(",") if t]
        points = drift_series(env, ids, synthesizer=synth)
    except LayerStageError as exc:
        _fail(exc, as_json)
    doc = {"targets": ids, "series": [p.as_dict() for p in points]}
    _emit(doc, as_json, json.dumps(doc, indent=2, sort_keys=True))


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8099, show_default=True)
@click.option("--bundle-root", type=click.Path(path_type=Path),
              envvar=BUNDLE_ROOT_ENV)
@click.option("--planner", "planner_endpoint", default=None,
              help="remote planner endpoint; default: offline stub")
@click.option("--no-gravity", is_flag=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--persist", "persist_dir", type=click.Path(path_type=Path),
              help="append per-session NDJSON logs here")
@click.option("--ui-dir", type=click.Path(path_type=Path),
              help="serve a built web UI from this directory at /ui")
def serve_cmd(host, port, bundle_root, planner_endpoint, no_gravity, seed,
              persist_dir, ui_dir):
    """Run the HTTP session service."""
    import uvicorn

    from .service import ServiceConfig, create_app

    app = create_app(ServiceConfig(
        bundle_root=bundle_root,
        auto_gravity=not no_gravity,
        seed=seed,
        planner_endpoint=planner_endpoint,
        persist_dir=persist_dir,
        ui_dir=ui_dir,
    ))
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
