"""HTTP session service: live multi-round editing over a small JSON API plus
an NDJSON event stream.

One session wraps one environment with a single-writer lock; reads (state,
renders, diagnostics) take snapshots, so interactive clients and scripts can
poll freely while actions are serialized in arrival order.  Persisting
``(bundle reference, action log)`` is enough to rebuild any session state,
which the ``replay`` CLI subcommand and the tests both exploit.
"""

from __future__ import annotations

import json
import queue
import secrets
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from fastapi import Body, FastAPI, HTTPException, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response, StreamingResponse

from . import engine
from .actions import PROVENANCE_PHYSICS, serialize_actions
from .errors import (
    LayerStageError,
    NothingToUndo,
    ParseError,
    PlannerMalformedReply,
    PlannerUnreachable,
    RoundOutOfRange,
    SessionNotFound,
)
from .metrics import drift_series
from .model import Environment, load_bundle, state_digest
from .ordering import order_environment
from .physics import infer_support
from .planner import HttpPlannerClient, StubPlanner, plan
from .render import composite
from .synth import StubSynthesizer


@dataclass
class ServiceConfig:
    bundle_root: Optional[Path] = None
    auto_gravity: bool = True
    seed: int = 0
    planner_endpoint: Optional[str] = None
    persist_dir: Optional[Path] = None
    ui_dir: Optional[Path] = None


class Session:
    def __init__(self, sid: str, env: Environment, bundle_ref: str, config: ServiceConfig):
        self.id = sid
        self.env = env
        self.bundle_ref = bundle_ref
        self.synthesizer = StubSynthesizer(seed=config.seed)
        self.auto_gravity = config.auto_gravity
        self.lock = threading.Lock()
        self.created = self.updated = time.time()
        self.seq = 0
        self.subscribers: list[queue.SimpleQueue] = []
        self._sub_lock = threading.Lock()

    def publish(self, event: str, payload: dict) -> None:
        self.seq += 1
        message = {"event": event, "seq": self.seq, **payload}
        with self._sub_lock:
            targets = list(self.subscribers)
        for q in targets:
            q.put(message)

    def subscribe(self) -> queue.SimpleQueue:
        q: queue.SimpleQueue = queue.SimpleQueue()
        with self._sub_lock:
            self.subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.SimpleQueue) -> None:
        with self._sub_lock:
            if q in self.subscribers:
                self.subscribers.remove(q)

    def round_digests(self) -> dict[int, str]:
        digests = {0: state_digest(self.env.baseline) if self.env.baseline else ""}
        last = digests[0]
        for record in self.env.action_log:
            if record.applied:
                last = record.post_state_digest
            digests[record.round] = last
        for r in range(self.env.round + 1):
            digests.setdefault(r, digests.get(r - 1, last))
        return digests

    def undo_counts(self) -> dict[int, int]:
        """Per round r: how many undo groups roll the state back to round r."""
        out = {}
        for r in range(self.env.round + 1):
            groups = {
                rec.group for rec in self.env.action_log
                if rec.applied and rec.provenance != PROVENANCE_PHYSICS
                and rec.round > r
            }
            out[r] = len(groups)
        return out

    def state_payload(self) -> dict:
        env = self.env
        support = infer_support(env)
        layers = []
        for layer in env.layers:
            x, y, w, h = layer.bbox()
            layers.append({
                "id": layer.id,
                "name": layer.name,
                "bbox": [x, y, w, h],
                "depth_score": layer.depth_score,
                "depth_hint": layer.depth_hint,
                "visible": layer.visible,
                "anchored": layer.anchored,
                "affected_by_gravity": layer.affected_by_gravity,
                "attributes": layer.attributes.as_dict(),
            })
        return {
            "id": self.id,
            "bundle": self.bundle_ref,
            "round": env.round,
            "canvas": {"width": env.canvas[0], "height": env.canvas[1]},
            "ground_y": env.ground_y,
            "stacking": list(env.stacking),
            "digest": state_digest(env),
            "round_digests": {str(k): v for k, v in sorted(self.round_digests().items())},
            "undo_counts": {str(k): v for k, v in sorted(self.undo_counts().items())},
            "layers": layers,
            "support": support.as_dict(),
        }


class SessionStore:
    def __init__(self):
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def add(self, session: Session) -> None:
        with self._lock:
            self._sessions[session.id] = session

    def get(self, sid: str) -> Session:
        with self._lock:
            session = self._sessions.get(sid)
        if session is None:
            raise SessionNotFound(f"no session {sid!r}", session_id=sid)
        return session


def _http_error(exc: LayerStageError, status: int) -> HTTPException:
    return HTTPException(status_code=status, detail=exc.to_json())


def create_app(config: Optional[ServiceConfig] = None) -> FastAPI:
    config = config or ServiceConfig()
    app = FastAPI(title="layerstage", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"])
    store = SessionStore()
    app.state.store = store
    app.state.config = config

    if config.planner_endpoint:
        planner_client = HttpPlannerClient(config.planner_endpoint)
    else:
        planner_client = StubPlanner()

    def resolve_bundle(ref: str) -> Path:
        path = Path(ref)
        if config.bundle_root is not None:
            root = config.bundle_root.resolve()
            path = (root / ref).resolve()
            if root not in path.parents and path != root:
                raise LayerStageError(f"bundle ref {ref!r} escapes the bundle root")
        return path

    def persist(session: Session, records) -> None:
        if config.persist_dir is None:
            return
        config.persist_dir.mkdir(parents=True, exist_ok=True)
        target = config.persist_dir / f"{session.id}.ndjson"
        with target.open("a", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record.to_json(), sort_keys=True) + "\n")

    @app.exception_handler(LayerStageError)
    def _domain_error(request: Request, exc: LayerStageError):
        status = 404 if isinstance(exc, (SessionNotFound, RoundOutOfRange)) else 400
        return JSONResponse(status_code=status, content=exc.to_json())

    @app.post("/sessions")
    def create_session(body: dict = Body(...)):
        ref = body.get("bundle")
        if not isinstance(ref, str) or not ref:
            raise HTTPException(status_code=422, detail="body must carry 'bundle'")
        try:
            env = load_bundle(resolve_bundle(ref))
            order_environment(env)
            env.freeze_baseline()
            initial = infer_support(env)
        except LayerStageError as exc:
            raise HTTPException(
                status_code=400,
                detail={"error": "bundle_invalid", "message": exc.message,
                        "cause": exc.to_json()}) from exc
        session = Session(secrets.token_urlsafe(16), env, ref, config)
        store.add(session)
        payload = session.state_payload()
        payload["support"] = initial.as_dict()
        return payload

    @app.get("/sessions/{sid}/state")
    def get_state(sid: str):
        session = store.get(sid)
        with session.lock:
            return session.state_payload()

    @app.post("/sessions/{sid}/actions")
    def submit_actions(sid: str, body: dict = Body(...)):
        from .actions import parse_script

        session = store.get(sid)
        with session.lock:
            try:
                actions = parse_script(json.dumps(body))
            except ParseError as exc:
                raise _http_error(exc, 400) from exc
            report = engine.run_round(
                session.env, actions, synthesizer=session.synthesizer,
                auto_gravity=session.auto_gravity)
            session.updated = time.time()
            persist(session, report.records)
            for record in report.records:
                if record.provenance == PROVENANCE_PHYSICS:
                    session.publish("physics_generated", {"record": record.to_json()})
                elif record.applied:
                    session.publish("action_applied", {"record": record.to_json()})
                else:
                    session.publish("action_rejected", {"record": record.to_json()})
            digest = state_digest(session.env)
            session.publish("round_complete",
                            {"round": report.round, "digest": digest})
            out = report.as_dict()
            out["digest"] = digest
            return out

    @app.get("/sessions/{sid}/render")
    def get_render(sid: str, round: Optional[int] = Query(default=None)):
        session = store.get(sid)
        with session.lock:
            env = session.env
            if round is not None:
                if round < 0 or round > env.round:
                    raise RoundOutOfRange(
                        f"round {round} outside [0, {env.round}]", round=round)
                env = engine.replay(env, upto_round=round,
                                    synthesizer=session.synthesizer)
            png = composite(env).to_png_bytes()
        return Response(content=png, media_type="image/png")

    @app.post("/sessions/{sid}/undo")
    def post_undo(sid: str, body: dict = Body(default={})):
        session = store.get(sid)
        k = body.get("k", 1)
        if not isinstance(k, int) or k <= 0:
            raise HTTPException(status_code=422, detail="'k' must be a positive int")
        with session.lock:
            try:
                session.env = engine.undo(session.env, k,
                                          synthesizer=session.synthesizer)
            except NothingToUndo as exc:
                raise _http_error(exc, 400) from exc
            session.updated = time.time()
            digest = state_digest(session.env)
            session.publish("state_reset",
                            {"round": session.env.round, "digest": digest})
            return session.state_payload()

    @app.get("/sessions/{sid}/diagnostics")
    def get_diagnostics(sid: str, targets: Optional[str] = Query(default=None)):
        session = store.get(sid)
        with session.lock:
            env = session.env
            if targets:
                ids = [t for t in targets.split(",") if t]
            else:
                ids = sorted({
                    r.action.object_id for r in env.action_log
                    if r.applied and r.provenance != PROVENANCE_PHYSICS
                    and getattr(r.action, "object_id", None)
                })
                ids = [i for i in ids if env.has_layer(i)]
            points = drift_series(env, ids, synthesizer=session.synthesizer)
            return {"targets": ids, "series": [p.as_dict() for p in points]}

    @app.post("/sessions/{sid}/plan")
    def post_plan(sid: str, body: dict = Body(...)):
        instruction = body.get("instruction")
        if not isinstance(instruction, str) or not instruction:
            raise HTTPException(status_code=422, detail="body must carry 'instruction'")
        session = store.get(sid)
        with session.lock:
            digest_before = state_digest(session.env)
            try:
                actions = plan(instruction, session.env, planner_client)
            except (PlannerUnreachable, PlannerMalformedReply) as exc:
                raise _http_error(exc, 502 if isinstance(exc, PlannerUnreachable) else 400) from exc
            assert state_digest(session.env) == digest_before  # plan must not mutate
            return {
                "instruction": instruction,
                "proposal": json.loads(serialize_actions(actions)),
            }

    @app.get("/sessions/{sid}/events")
    def get_events(sid: str,
                   limit: Optional[int] = Query(default=None),
                   timeout: float = Query(default=30.0)):
        session = store.get(sid)
        q = session.subscribe()
        hello = {"event": "hello", "seq": session.seq,
                 "round": session.env.round,
                 "digest": state_digest(session.env)}

        def stream():
            sent = 0
            deadline = time.monotonic() + timeout
            try:
                yield json.dumps(hello, sort_keys=True) + "\n"
                sent += 1
                while (limit is None or sent < limit) and time.monotonic() < deadline:
                    try:
                        message = q.get(timeout=min(0.2, timeout))
                    except queue.Empty:
                        continue
                    yield json.dumps(message, sort_keys=True) + "\n"
                    sent += 1
            finally:
                session.unsubscribe(q)

        return StreamingResponse(stream(), media_type="application/x-ndjson")

    if config.ui_dir is not None and config.ui_dir.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(config.ui_dir), html=True),
                  name="ui")

    return app
