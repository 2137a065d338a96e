"""Session service: the drag engine behind an HTTP API for the studio.

Each session owns a worker thread fed by a command queue; observation is
snapshot-based at step boundaries, so clients never see a half-applied
step.  Completed runs are flushed to disk at terminal status.
"""

from __future__ import annotations

import json
import os
import queue
import threading
import time
import uuid
from typing import Dict, List, Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response, StreamingResponse
from fastapi.staticfiles import StaticFiles

from . import rendering, scenarios
from .engine import (DragSession, RUNNING, PAUSED, SessionStateError, run,
                     start_session, step)
from .errors import DragfieldError, NumericError, ValidationError
from .tracker import make_patch


class ManagedSession:
    """One engine session plus its worker, snapshots and subscribers."""

    def __init__(self, session: DragSession, out_dir: Optional[str]):
        self.id = uuid.uuid4().hex[:12]
        self.session = session
        self.out_dir = out_dir
        self.created_at = time.time()
        self.commands: "queue.Queue[tuple]" = queue.Queue()
        self.subscribers: List[queue.Queue] = []
        self.lock = threading.Lock()
        self.snapshot = self._take_snapshot()
        self.worker = threading.Thread(target=self._loop, daemon=True)
        self.worker.start()

    # -- snapshots and streaming ------------------------------------------

    def _take_snapshot(self) -> dict:
        s = self.session
        return {
            "id": getattr(self, "id", None),
            "scenario_id": s.scenario_id,
            "status": s.status,
            "step": s.step_count,
            "points": [{
                "p": [int(pt.p[0]), int(pt.p[1])],
                "p0": [int(pt.p0[0]), int(pt.p0[1])],
                "target": [int(pt.t[0]), int(pt.t[1])],
                "s": pt.s_latest,
                "s1": pt.s1,
                "converged": pt.converged,
                "trajectory": [[int(st), [int(p[0]), int(p[1])], sv]
                               for st, p, sv in pt.trajectory],
            } for pt in s.points],
            "gate_history": [r.gate_choice for r in s.record.steps],
            "config": dict(s.record.config),
            "width": s.spec.width,
            "height": s.spec.height,
            "failure": s.failure,
        }

    def publish(self, record=None) -> None:
        with self.lock:
            self.snapshot = self._take_snapshot()
            if record is not None:
                message = {"type": "step", "record": record.to_dict(),
                           "status": self.session.status}
            else:
                message = {"type": "status", "status": self.session.status}
            for q in list(self.subscribers):
                q.put(message)

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self.lock:
            # replay history so late subscribers see the full run in order
            for r in self.session.record.steps:
                q.put({"type": "step", "record": r.to_dict(),
                       "status": None})
            self.subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self.lock:
            if q in self.subscribers:
                self.subscribers.remove(q)

    # -- worker -------------------------------------------------------------

    def _loop(self) -> None:
        while True:
            command, arg = self.commands.get()
            if command == "stop":
                return
            try:
                if command == "step":
                    for _ in range(arg):
                        if self.session.status != RUNNING:
                            break
                        record = step(self.session)
                        self.publish(record)
                elif command == "run":
                    if self.session.status == PAUSED:
                        self.session.status = RUNNING
                    while self.session.status == RUNNING:
                        if self.session.step_count >= self.session.config.max_steps:
                            self.session.status = "max_steps"
                            self.session.record.status = "max_steps"
                            break
                        if not self.commands.empty():
                            break   # pause or further commands interleave
                        record = step(self.session)
                        self.publish(record)
                elif command == "pause":
                    if self.session.status == RUNNING:
                        self.session.status = PAUSED
                        self.session.record.status = PAUSED
            except (NumericError, SessionStateError):
                pass
            self.publish()
            if self.session.terminal() and self.out_dir:
                self.flush()

    def flush(self) -> None:
        out = os.path.join(self.out_dir, f"session_{self.id}")
        self.session.record.save(out)


class SessionManager:
    def __init__(self, out_dir: Optional[str] = None):
        self.out_dir = out_dir
        self.sessions: Dict[str, ManagedSession] = {}
        self.lock = threading.Lock()

    def create(self, scenario: scenarios.Scenario, overrides: dict) -> ManagedSession:
        config = scenario.config(**overrides)
        session = start_session(scenario, config)
        managed = ManagedSession(session, self.out_dir)
        with self.lock:
            self.sessions[managed.id] = managed
        managed.publish()
        return managed

    def get(self, sid: str) -> Optional[ManagedSession]:
        return self.sessions.get(sid)

    def list(self) -> List[dict]:
        with self.lock:
            return [{"id": m.id, "status": m.session.status,
                     "scenario_id": m.session.scenario_id,
                     "created_at": m.created_at}
                    for m in self.sessions.values()]


def create_app(out_dir: Optional[str] = None,
               frontend_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="dragfield session service")
    manager = SessionManager(out_dir=out_dir)
    app.state.manager = manager

    def not_found() -> JSONResponse:
        return JSONResponse({"error": "unknown session"}, status_code=404)

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        body = await request.json()
        if not isinstance(body, dict):
            return JSONResponse({"errors": ["body must be an object"]},
                                status_code=422)
        overrides = body.get("config_overrides", {})
        try:
            scenario = scenarios.from_dict(body.get("scenario", {}))
            managed = manager.create(scenario, overrides)
        except ValidationError as exc:
            return JSONResponse(
                {"errors": [{"field": v.split(":", 1)[0].strip(),
                             "message": v} for v in exc.violations]},
                status_code=422)
        except DragfieldError as exc:
            return JSONResponse({"errors": [str(exc)]}, status_code=500)
        return {"id": managed.id, "status": managed.session.status}

    @app.get("/sessions")
    def list_sessions():
        return {"sessions": manager.list()}

    @app.get("/sessions/{sid}/state")
    def get_state(sid: str):
        managed = manager.get(sid)
        if managed is None:
            return not_found()
        with managed.lock:
            return managed.snapshot

    @app.post("/sessions/{sid}/control", status_code=202)
    async def control(sid: str, request: Request):
        managed = manager.get(sid)
        if managed is None:
            return not_found()
        body = await request.json()
        action = body.get("action")
        if action not in ("step", "run", "pause"):
            return JSONResponse(
                {"errors": ["action must be step, run or pause"]},
                status_code=422)
        if action in ("step", "run") and managed.session.terminal():
            return JSONResponse(
                {"error": f"session is terminal ({managed.session.status})"},
                status_code=409)
        if action == "pause":
            managed.session.pause_requested.set()
        managed.commands.put((action, int(body.get("steps", 1))))
        return {"accepted": action, "status": managed.session.status}

    @app.get("/sessions/{sid}/frame")
    def get_frame(sid: str, heatmap_point: Optional[int] = None):
        managed = manager.get(sid)
        if managed is None:
            return not_found()
        with managed.lock:
            session = managed.session
            img = rendering.field_image(session.F)
            img = rendering.overlay_trajectories(
                img,
                [[p for _, p, _ in pt.trajectory] for pt in session.points],
                [pt.t for pt in session.points])
            if heatmap_point is not None and \
                    0 <= heatmap_point < len(session.points):
                from .tracker import score_map

                pt = session.points[heatmap_point]
                scores, patch = score_map(
                    session.F.values, pt.p, session.config.r2,
                    pt.f_template, pt.tracker, session.config.lam)
                img = rendering.heatmap_overlay(img, scores,
                                                (patch.x0, patch.y0))
        return Response(content=rendering.png_bytes(img),
                        media_type="image/png")

    @app.get("/sessions/{sid}/events")
    def events(sid: str):
        managed = manager.get(sid)
        if managed is None:
            return not_found()
        q = managed.subscribe()

        def stream():
            try:
                while True:
                    try:
                        message = q.get(timeout=2.0)
                    except queue.Empty:
                        if managed.session.terminal():
                            return
                        yield ": keepalive\n\n"
                        continue
                    yield f"data: {json.dumps(message)}\n\n"
                    if managed.session.terminal() and q.empty():
                        return
            finally:
                managed.unsubscribe(q)

        return StreamingResponse(stream(), media_type="text/event-stream")

    if frontend_dir and os.path.isdir(frontend_dir):
        app.mount("/", StaticFiles(directory=frontend_dir, html=True),
                  name="studio")

    return app
