"""The drag loop: initialize templates and trackers, then iterate
gate -> supervise -> regenerate -> track until every point converges.

A session owns one scenario's full mutable state.  Step boundaries are
the only observation points; each step appends an atomic StepRecord.
Windows that hit the field border are clipped (suite scenarios keep
drags away from borders, so acceptance runs never exercise the clip).
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field as dc_field
from typing import List, Optional, Tuple

import numpy as np

from .errors import NumericError, ValidationError
from .field import BlobSceneSpec, FeatureField, LatentCode, generate
from .records import RunRecord, StepRecord
from .scenarios import Scenario, validate_for_session
from .supervision import (Adam, DYNAMIC, TEMPLATE, SupervisionConfig,
                          select_loss, supervision_step)
from .tracker import TrackerModel, score_map, track_update, train_tracker

RUNNING = "running"
PAUSED = "paused"
CONVERGED = "converged"
MAX_STEPS = "max_steps"
FAILED = "failed"
TERMINAL = (CONVERGED, MAX_STEPS, FAILED)


class SessionStateError(ValidationError):
    """Operation not valid for the session's current status."""


@dataclass
class DragPointState:
    p0: Tuple[int, int]
    p: Tuple[int, int]
    t: Tuple[int, int]
    f_template: np.ndarray
    tracker: TrackerModel
    blob_index: int
    s1: Optional[float] = None
    s_latest: Optional[float] = None
    converged: bool = False
    trajectory: List[tuple] = dc_field(default_factory=list)


@dataclass
class DragSession:
    scenario: Scenario
    scenario_id: str
    spec: BlobSceneSpec
    config: SupervisionConfig
    w: LatentCode
    F0: FeatureField
    F: FeatureField
    mask: np.ndarray
    points: List[DragPointState]
    adam: Adam
    record: RunRecord
    step_count: int = 0
    status: str = "initializing"
    failure: Optional[str] = None
    pause_requested: threading.Event = dc_field(default_factory=threading.Event)

    def terminal(self) -> bool:
        return self.status in TERMINAL


def _distance(a, b) -> float:
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


def start_session(scenario: Scenario,
                  config: Optional[SupervisionConfig] = None) -> DragSession:
    """Validate, render the initial field, and train every point's tracker."""
    cfg = config if config is not None else scenario.config()
    validate_for_session(scenario, cfg)

    spec = scenario.spec()
    w = scenario.initial_latent()
    t_start = time.perf_counter()
    f0 = generate(spec, w, scenario_id=scenario.scenario_id())
    f0.tensor.values.setflags(write=False)   # frozen after initialization

    points: List[DragPointState] = []
    train_start = time.perf_counter()
    for idx, pt in enumerate(scenario.points):
        x0, y0 = pt.handle
        template = f0.values[:, y0, x0].copy()
        tracker = train_tracker(f0.values, pt.handle, cfg.r2, cfg.label_sigma,
                                iters=cfg.tracker_iters,
                                step_size=cfg.tracker_step_size,
                                snap_every=cfg.snap_every)
        state = DragPointState(
            p0=pt.handle, p=pt.handle, t=pt.target,
            f_template=template, tracker=tracker,
            blob_index=scenario.blob_for_point(idx))
        state.converged = _distance(state.p, state.t) <= cfg.convergence_radius
        state.trajectory.append((0, state.p, None))
        points.append(state)
    train_time = time.perf_counter() - train_start

    record = RunRecord(
        scenario=scenario.to_dict(),
        config=_config_dict(cfg),
        tracker_traces=[p.tracker.train_trace for p in points],
        status=RUNNING,
    )
    record.timings["tracker_train_s"] = train_time
    record.timings["init_s"] = time.perf_counter() - t_start
    for i, p in enumerate(points):
        for it, grid in p.tracker.snapshots:
            record.arrays[f"tracker{i}_snapshot_{it:05d}"] = grid

    session = DragSession(
        scenario=scenario, scenario_id=scenario.scenario_id(), spec=spec,
        config=cfg, w=w, F0=f0,
        F=FeatureField(tensor=f0.tensor, scenario_id=f0.scenario_id,
                       latent_snapshot=f0.latent_snapshot),
        mask=scenario.mask(), points=points, adam=Adam(
            w.values.size, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps),
        record=record, status=RUNNING)
    if all(p.converged for p in points):
        session.status = CONVERGED
        session.record.status = CONVERGED
    return session


def _config_dict(cfg: SupervisionConfig) -> dict:
    return {
        "eta": cfg.eta, "tau": cfg.tau, "lam": cfg.lam,
        "r1": cfg.r1, "r2": cfg.r2, "lr": cfg.lr,
        "beta1": cfg.beta1, "beta2": cfg.beta2, "adam_eps": cfg.adam_eps,
        "max_steps": cfg.max_steps,
        "convergence_radius": cfg.convergence_radius,
        "tracker_iters": cfg.tracker_iters,
        "tracker_step_size": cfg.tracker_step_size,
        "sigma_label": cfg.label_sigma, "snap_every": cfg.snap_every,
    }


def step(session: DragSession) -> StepRecord:
    """One atomic drag step: gate, supervise, regenerate, track, record."""
    if session.status != RUNNING:
        raise SessionStateError(f"cannot step a session in status {session.status!r}")
    if session.step_count >= session.config.max_steps:
        session.status = MAX_STEPS
        session.record.status = MAX_STEPS
        raise SessionStateError("session already at its step budget")

    cfg = session.config
    t0 = time.perf_counter()
    first_step = session.step_count == 0

    gates = []
    gate_confidences: List[Optional[float]] = []
    for pt in session.points:
        if first_step or pt.s1 is None:
            gates.append(DYNAMIC)
            gate_confidences.append(None)
        else:
            gates.append(select_loss(pt.s_latest, pt.s1, cfg.tau))
            gate_confidences.append(pt.s_latest)

    try:
        loss_value = supervision_step(session, gates)
        session.F = generate(session.spec, session.w,
                             scenario_id=session.scenario_id)
    except NumericError as exc:
        session.status = FAILED
        session.failure = str(exc)
        session.record.status = FAILED
        session.record.failure = str(exc)
        raise

    step_no = session.step_count + 1
    for i, pt in enumerate(session.points):
        if pt.converged:
            continue
        scores, patch = score_map(session.F.values, pt.p, cfg.r2,
                                  pt.f_template, pt.tracker, cfg.lam)
        new_p, s = track_update(scores, patch)
        pt.p = new_p
        pt.s_latest = s
        if pt.s1 is None:
            pt.s1 = s
        pt.trajectory.append((step_no, pt.p, s))
        session.record.arrays[f"scores_p{i}_s{step_no:04d}"] = scores
        if _distance(pt.p, pt.t) <= cfg.convergence_radius:
            pt.converged = True

    session.step_count = step_no
    record = StepRecord(
        step=step_no,
        gate_choice=TEMPLATE if TEMPLATE in gates else DYNAMIC,
        gate_confidences=gate_confidences,
        loss=loss_value,
        points=[{"p": [int(pt.p[0]), int(pt.p[1])],
                 "s": pt.s_latest, "converged": pt.converged}
                for pt in session.points],
        w=[float(v) for v in session.w.values],
        wall_time=time.perf_counter() - t0,
    )
    session.record.steps.append(record)

    if all(pt.converged for pt in session.points):
        session.status = CONVERGED
    elif session.step_count >= cfg.max_steps:
        session.status = MAX_STEPS
    session.record.status = session.status
    return record


def run(session: DragSession) -> DragSession:
    """Step to a terminal status; honors pause requests between steps."""
    if session.status == PAUSED:
        session.status = RUNNING
        session.record.status = RUNNING
    if session.status != RUNNING and not session.terminal():
        raise SessionStateError(f"cannot run a session in status {session.status!r}")
    drag_start = time.perf_counter()
    while session.status == RUNNING:
        if session.step_count >= session.config.max_steps:
            session.status = MAX_STEPS
            session.record.status = MAX_STEPS
            break
        if session.pause_requested.is_set():
            session.pause_requested.clear()
            session.status = PAUSED
            session.record.status = PAUSED
            break
        try:
            step(session)
        except NumericError:
            break
    session.record.timings["drag_s"] = (
        session.record.timings.get("drag_s", 0.0)
        + time.perf_counter() - drag_start)
    return session
