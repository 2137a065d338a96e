"""Desk-scale evaluation: oracle mean distance, a fidelity proxy, the
four-variant ablation, and tau/lambda sweeps.

Mean distance is measured against the generator's own ground truth (blob
centers read from the latent), never against the tracker's belief, so a
lost tracker cannot hide its failure.  The fidelity proxy scores
preservation of the non-editable region relative to the initial field's
dynamic range.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .engine import DragSession, run, start_session
from .errors import UnsupportedScenarioError
from .field import semantic_oracle
from .scenarios import Scenario


@dataclass
class EvalResult:
    scenario_id: str
    variant: str
    mean_distance: float
    fidelity_proxy: float
    fidelity_degenerate: bool
    steps_used: int
    status: str
    wall_time: float
    seed: int
    config: dict

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def mean_distance(session: DragSession) -> float:
    """Mean oracle-to-target distance over handle points, in pixels."""
    if not session.terminal():
        raise UnsupportedScenarioError("mean_distance needs a terminal session")
    dists = []
    for pt in session.points:
        if pt.blob_index is None or not (
                0 <= pt.blob_index < session.spec.nblobs):
            raise UnsupportedScenarioError(
                "scenario lacks a blob oracle for a handle point")
        cx, cy = semantic_oracle(session.spec, session.w, pt.blob_index)
        dists.append(float(np.hypot(cx - pt.t[0], cy - pt.t[1])))
    return float(np.mean(dists))


def fidelity_proxy(session: DragSession) -> float:
    """1 - clamp(mean |F - F0| outside the mask / dynamic range, 0, 1)."""
    preserved = 1.0 - session.mask
    weight = float(preserved.sum())
    if weight == 0.0:
        return 1.0   # no preserved region; flagged by fidelity_degenerate
    f0 = session.F0.values
    diff = np.abs(session.F.values - f0).mean(axis=0)
    mean_change = float((diff * preserved).sum() / weight)
    dynamic_range = float(f0.max() - f0.min())
    if dynamic_range <= 0.0:
        return 1.0
    return 1.0 - float(np.clip(mean_change / dynamic_range, 0.0, 1.0))


def fidelity_degenerate(session: DragSession) -> bool:
    return float((1.0 - session.mask).sum()) == 0.0


def evaluate(scenario: Scenario, variant: str = "full",
             steps: Optional[int] = None, **config_extra) -> EvalResult:
    """Run one scenario under one config variant and score it."""
    cfg = scenario.config(max_steps=steps, **config_extra)
    session = run(start_session(scenario, cfg))
    return _result_for(session, variant)


def _result_for(session: DragSession, variant: str) -> EvalResult:
    return EvalResult(
        scenario_id=session.scenario_id,
        variant=variant,
        mean_distance=mean_distance(session),
        fidelity_proxy=fidelity_proxy(session),
        fidelity_degenerate=fidelity_degenerate(session),
        steps_used=session.step_count,
        status=session.status,
        wall_time=session.record.timings.get("drag_s", 0.0),
        seed=session.scenario.seed,
        config=dict(session.record.config),
    )


ABLATION_VARIANTS = (
    ("full", {}),                       # scenario defaults: lam=0.3, tau=0.4
    ("no_dpt", {"lam": 1.0}),           # plain feature difference tracking
    ("no_cms", {"tau": 0.0}),           # dynamic supervision only
    ("baseline", {"lam": 1.0, "tau": 0.0}),
)


def ablate(scenarios: Sequence[Scenario], steps: Optional[int] = None,
           jobs: int = 1) -> List[EvalResult]:
    """Four variants per scenario; failures fill a row without aborting."""
    if not scenarios:
        raise UnsupportedScenarioError("ablate needs a non-empty suite")
    tasks = [(sc, name, overrides)
             for sc in scenarios for name, overrides in ABLATION_VARIANTS]

    def _one(task):
        sc, name, overrides = task
        try:
            return evaluate(sc, variant=name, steps=steps, **overrides)
        except Exception as exc:   # a failed row, not a failed sweep
            return EvalResult(scenario_id=sc.scenario_id(), variant=name,
                              mean_distance=float("nan"),
                              fidelity_proxy=float("nan"),
                              fidelity_degenerate=False, steps_used=0,
                              status=f"error: {exc}", wall_time=0.0,
                              seed=sc.seed, config={})

    results = _map(tasks, _one, jobs)
    return sorted(results, key=lambda r: (r.scenario_id, r.variant))


def sweep(parameter: str, values: Sequence[float],
          scenarios: Sequence[Scenario], steps: Optional[int] = None,
          jobs: int = 1) -> List[EvalResult]:
    """Sensitivity sweep; the other knob is pinned to 0.0.

    Sweeping tau fixes lambda to 0; sweeping lambda fixes tau to 0,
    matching the fixed-other-knob protocol of the sensitivity studies.
    """
    if parameter not in ("tau", "lambda"):
        raise UnsupportedScenarioError("sweep parameter must be tau or lambda")
    for v in values:
        if not 0.0 <= v <= 1.0:
            raise UnsupportedScenarioError(f"sweep value {v} outside [0, 1]")
    tasks = [(sc, float(v)) for v in values for sc in scenarios]

    def _one(task):
        sc, v = task
        if parameter == "tau":
            overrides = {"tau": v, "lam": 0.0}
        else:
            overrides = {"lam": v, "tau": 0.0}
        label = f"{parameter}={v:g}"
        try:
            return evaluate(sc, variant=label, steps=steps, **overrides)
        except Exception as exc:
            return EvalResult(scenario_id=sc.scenario_id(), variant=label,
                              mean_distance=float("nan"),
                              fidelity_proxy=float("nan"),
                              fidelity_degenerate=False, steps_used=0,
                              status=f"error: {exc}", wall_time=0.0,
                              seed=sc.seed, config={})

    results = _map(tasks, _one, jobs)
    return sorted(results, key=lambda r: (r.variant, r.scenario_id))


def _map(tasks, fn, jobs):
    if jobs <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def aggregate(results: Iterable[EvalResult]) -> dict:
    """Per-variant means of MD and fidelity across scenarios."""
    by_variant: dict = {}
    for r in results:
        by_variant.setdefault(r.variant, []).append(r)
    out = {}
    for variant, rows in by_variant.items():
        md = [r.mean_distance for r in rows if np.isfinite(r.mean_distance)]
        fid = [r.fidelity_proxy for r in rows if np.isfinite(r.fidelity_proxy)]
        out[variant] = {
            "mean_distance": float(np.mean(md)) if md else float("nan"),
            "fidelity_proxy": float(np.mean(fid)) if fid else float("nan"),
            "rows": len(rows),
        }
    return out


def format_table(results: Sequence[EvalResult]) -> str:
    """Aligned plain-text report."""
    headers = ["scenario", "variant", "MD(px)", "fidelity", "steps", "status"]
    rows = [[r.scenario_id, r.variant, f"{r.mean_distance:.3f}",
             f"{r.fidelity_proxy:.4f}" + ("*" if r.fidelity_degenerate else ""),
             str(r.steps_used), r.status] for r in results]
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    def fmt(row):
        return "  ".join(f"{cell:<{w}}" for cell, w in zip(row, widths))
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(row) for row in rows)
    lines.append("")
    lines.append("* fidelity flagged: mask covers the whole field")
    return "\n".join(lines) + "\n"
