"""Run records: per-step provenance sufficient to replay a drag.

The canonical portion (scenario, config, steps, traces, status, sidecar
hashes) serializes to byte-stable JSON: two runs of the same scenario,
config and seed produce identical bytes.  Wall-clock timings live in a
separate document so artifact files stay idempotent.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
from dataclasses import dataclass, field as dc_field
from typing import Dict, List, Optional

import numpy as np

RECORD_FILENAME = "run_record.json"
TIMINGS_FILENAME = "run_timings.json"
SIDECAR_FILENAME = "run_arrays.npz"


@dataclass
class StepRecord:
    step: int
    gate_choice: str                     # "dynamic" | "template"
    gate_confidences: List[Optional[float]]   # per point, the s the gate saw
    loss: float
    points: List[dict]                   # {"p": [x, y], "s": float, "converged": bool}
    w: List[float]                       # latent after the step
    wall_time: float = 0.0               # seconds; excluded from canonical bytes

    def to_dict(self, with_timing: bool = True) -> dict:
        doc = {
            "step": self.step,
            "gate_choice": self.gate_choice,
            "gate_confidences": self.gate_confidences,
            "loss": self.loss,
            "points": self.points,
            "w": self.w,
        }
        if with_timing:
            doc["wall_time"] = self.wall_time
        return doc


@dataclass
class RunRecord:
    scenario: dict
    config: dict
    steps: List[StepRecord] = dc_field(default_factory=list)
    tracker_traces: List[List[float]] = dc_field(default_factory=list)
    status: str = "initializing"
    failure: Optional[str] = None
    timings: Dict[str, float] = dc_field(default_factory=dict)
    arrays: Dict[str, np.ndarray] = dc_field(default_factory=dict)

    # -- canonical (deterministic) content --------------------------------

    def canonical_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "config": self.config,
            "steps": [s.to_dict(with_timing=False) for s in self.steps],
            "tracker_traces": self.tracker_traces,
            "status": self.status,
            "failure": self.failure,
            "arrays_sha256": self._arrays_sha256(),
        }

    def canonical_bytes(self) -> bytes:
        return json.dumps(self.canonical_dict(), sort_keys=True,
                          separators=(",", ":")).encode()

    def canonical_sha256(self) -> str:
        return hashlib.sha256(self.canonical_bytes()).hexdigest()

    def _arrays_bytes(self) -> bytes:
        buf = io.BytesIO()
        np.savez(buf, **{k: self.arrays[k] for k in sorted(self.arrays)})
        return buf.getvalue()

    def _arrays_sha256(self) -> Optional[str]:
        if not self.arrays:
            return None
        return hashlib.sha256(self._arrays_bytes()).hexdigest()

    # -- persistence -------------------------------------------------------

    def save(self, out_dir) -> dict:
        """Write record, timings and array sidecar; returns the paths."""
        os.makedirs(out_dir, exist_ok=True)
        paths = {"record": os.path.join(out_dir, RECORD_FILENAME)}
        doc = self.canonical_dict()
        if self.arrays:
            sidecar = os.path.join(out_dir, SIDECAR_FILENAME)
            with open(sidecar, "wb") as fh:
                fh.write(self._arrays_bytes())
            doc["arrays_path"] = SIDECAR_FILENAME
            paths["arrays"] = sidecar
        with open(paths["record"], "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        timings_path = os.path.join(out_dir, TIMINGS_FILENAME)
        with open(timings_path, "w", encoding="utf-8") as fh:
            json.dump({"timings": self.timings,
                       "step_wall_times": [s.wall_time for s in self.steps]},
                      fh, indent=2, sort_keys=True)
            fh.write("\n")
        paths["timings"] = timings_path
        return paths


def load_record(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    arrays_path = doc.get("arrays_path")
    if arrays_path:
        full = os.path.join(base, arrays_path)
        if os.path.exists(full):
            with np.load(full) as data:
                doc["arrays"] = {k: data[k] for k in data.files}
    return doc
