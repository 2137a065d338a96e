"""Discriminative point tracking.

Each handle point gets a C-dimensional filter applied as a 1x1
convolution over a local search window.  The filter is trained once on
the initial field against a Gaussian confidence label (gradients flow
into the filter only), then fused with the plain feature-difference
score at every drag step:

    score = lam * exp(-mean_c |F(q) - template|) + (1 - lam) * (z . F(q))

The filter response is used raw; its scale is calibrated by training
against peak-1 labels, so fused scores stay near [0, 1] without an extra
normalizer (sensitivity to this choice is mild because the difference
term is bounded by construction).  The difference term uses the
per-channel MEAN so wide-channel scenes do not underflow the exponent.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import List, Optional, Tuple

import numpy as np

from . import kernels
from .errors import ShapeError, TrainingDivergedError


@dataclass
class SearchPatch:
    """A square search window, clipped to the field."""

    center: Tuple[int, int]           # (x, y) in field coordinates
    radius: int
    x0: int
    y0: int
    x1: int                            # exclusive
    y1: int                            # exclusive

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    def to_field(self, row: int, col: int) -> Tuple[int, int]:
        return self.x0 + col, self.y0 + row


def make_patch(center: Tuple[int, int], radius: int, height: int, width: int) -> SearchPatch:
    cx, cy = int(center[0]), int(center[1])
    if radius < 1:
        raise ShapeError("search radius must be >= 1")
    x0 = max(0, cx - radius + 1)
    y0 = max(0, cy - radius + 1)
    x1 = min(width, cx + radius)
    y1 = min(height, cy + radius)
    if x1 <= x0 or y1 <= y0:
        raise ShapeError(f"search window around {center} is empty after clipping")
    return SearchPatch(center=(cx, cy), radius=radius, x0=x0, y0=y0, x1=x1, y1=y1)


def extract_patch(field_values: np.ndarray, patch: SearchPatch) -> np.ndarray:
    return field_values[:, patch.y0:patch.y1, patch.x0:patch.x1]


def gaussian_label(patch: SearchPatch, sigma_label: float) -> np.ndarray:
    """Desired confidence scores: peak 1.0 at the window center."""
    if sigma_label <= 0:
        raise ShapeError("sigma_label must be positive")
    xs = np.arange(patch.x0, patch.x1, dtype=np.float64) - patch.center[0]
    ys = np.arange(patch.y0, patch.y1, dtype=np.float64) - patch.center[1]
    d2 = ys[:, None] ** 2 + xs[None, :] ** 2
    return np.exp(-d2 / (2.0 * sigma_label ** 2))


@dataclass
class TrackerModel:
    """Per-point 1x1 convolution filter with its training history."""

    z: np.ndarray
    trained: bool = False
    train_trace: List[float] = dc_field(default_factory=list)
    snapshots: List[Tuple[int, np.ndarray]] = dc_field(default_factory=list)


def apply_tracker(field_patch: np.ndarray, model: TrackerModel) -> np.ndarray:
    """Filter response grid: per-position inner product over channels."""
    z = model.z if isinstance(model, TrackerModel) else np.asarray(model)
    if field_patch.shape[0] != z.shape[0]:
        raise ShapeError(
            f"channel mismatch: patch has {field_patch.shape[0]}, filter {z.shape[0]}")
    return np.einsum("chw,c->hw", field_patch, z)


def train_tracker(field0: np.ndarray, p0: Tuple[int, int], r2: int,
                  sigma_label: float, iters: int = 1000,
                  step_size: float = 0.01, snap_every: int = 100) -> TrackerModel:
    """Fit the filter on the initial field before any manipulation.

    The filter starts from the handle point's own feature vector and is
    regressed onto the Gaussian label; the field patch is a constant
    (no gradient reaches it).  Raises TrainingDivergedError when the loss
    exceeds 10x its initial value within the first tenth of the budget.
    """
    if iters < 1:
        raise ShapeError("iters must be >= 1")
    _, height, width = field0.shape
    patch = make_patch(p0, r2, height, width)
    values = np.ascontiguousarray(extract_patch(field0, patch))
    label = gaussian_label(patch, sigma_label)
    z0 = field0[:, p0[1], p0[0]].copy()

    z, trace, snaps = kernels.train_filter(values, label, z0, iters,
                                           step_size, snap_every)

    guard = max(1, iters // 10)
    if not np.all(np.isfinite(trace[:guard + 1])) or \
            np.any(trace[1:guard + 1] > 10.0 * trace[0]):
        raise TrainingDivergedError(
            f"tracker training diverged (loss {trace[guard]:.3g} vs initial "
            f"{trace[0]:.3g}); try a smaller step_size than {step_size}")
    if not np.all(np.isfinite(trace)):
        raise TrainingDivergedError("tracker training produced non-finite loss")

    return TrackerModel(z=z, trained=True, train_trace=[float(v) for v in trace],
                        snapshots=[(int(i), s) for i, s in snaps])


def score_map(field_values: np.ndarray, p: Tuple[int, int], r2: int,
              template: np.ndarray, model: TrackerModel,
              lam: float) -> Tuple[np.ndarray, SearchPatch]:
    """Fused confidence map over the search window around p."""
    if not 0.0 <= lam <= 1.0:
        raise ShapeError(f"lambda must lie in [0, 1], got {lam}")
    _, height, width = field_values.shape
    patch = make_patch(p, r2, height, width)
    values = np.ascontiguousarray(extract_patch(field_values, patch))
    scores = kernels.fused_score(values, np.asarray(template, dtype=np.float64),
                                 model.z, float(lam))
    return scores, patch


def track_update(scores: np.ndarray, patch: SearchPatch) -> Tuple[Tuple[int, int], float]:
    """Argmax of the score grid mapped to field coordinates, plus its value.

    Ties resolve to the smallest row-major index, so results are
    deterministic on flat grids.
    """
    if scores.size == 0:
        raise ShapeError("empty score grid")
    flat_idx = int(np.argmax(scores))
    row, col = divmod(flat_idx, scores.shape[1])
    return patch.to_field(row, col), float(scores[row, col])
