"""Motion supervision: the two drag losses, the confidence gate, Adam.

The dynamic loss pins the moving side to the detached current features
so content is nudged one unit step along the deviation vector; the
template loss swaps the reference for the frozen step-0 features around
the initial points.  The gate picks per point: dynamic while the fused
tracking confidence stays above tau * (step-1 confidence), template at
or below it.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field as dc_field, replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConvergedSignal, DegeneratePatchError, NumericError, ShapeError
from .tensor import Tensor, bilinear_sample_many, masked_abs_sum

DYNAMIC = "dynamic"
TEMPLATE = "template"


@dataclass(frozen=True)
class SupervisionConfig:
    eta: float = 20.0
    tau: float = 0.4
    lam: float = 0.3
    r1: int = 3
    r2: int = 12
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    # the epsilon floor doubles as a gradient deadband: latents whose loss
    # coupling is microscopic (far-field blob tails) should not move at
    # full normalized speed
    adam_eps: float = 1e-3
    max_steps: int = 60
    convergence_radius: float = 1.0
    tracker_iters: int = 1000
    tracker_step_size: float = 0.01
    sigma_label: Optional[float] = None   # None -> r2 / 4
    snap_every: int = 100

    def __post_init__(self):
        problems = []
        if self.eta < 0:
            problems.append("eta must be >= 0")
        if not 0.0 <= self.tau <= 1.0:
            problems.append("tau must lie in [0, 1]")
        if not 0.0 <= self.lam <= 1.0:
            problems.append("lambda must lie in [0, 1]")
        if self.r1 < 1 or self.r2 < 2:
            problems.append("radii must be positive (r1 >= 1, r2 >= 2)")
        if self.lr <= 0:
            problems.append("learning rate must be positive")
        if self.max_steps < 0:
            problems.append("max_steps must be >= 0")
        if self.convergence_radius <= 0:
            problems.append("convergence radius must be positive")
        if problems:
            raise ShapeError("; ".join(problems))

    @property
    def label_sigma(self) -> float:
        return self.sigma_label if self.sigma_label is not None else self.r2 / 4.0


class Adam:
    """Plain Adam; state persists across drag steps within a session."""

    def __init__(self, size: int, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = np.zeros(size)
        self.v = np.zeros(size)

    def step(self, w: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return w - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def deviation_vector(p: Sequence[float], t: Sequence[float]) -> np.ndarray:
    """Unit vector from the handle point toward its target."""
    d = np.asarray(t, dtype=np.float64) - np.asarray(p, dtype=np.float64)
    norm = float(np.linalg.norm(d))
    if norm == 0.0:
        raise ConvergedSignal(f"point {tuple(p)} already sits on its target")
    return d / norm


@functools.lru_cache(maxsize=32)
def disk_offsets(r1: int) -> np.ndarray:
    """Integer offsets with Euclidean distance < r1 (row-major order)."""
    span = np.arange(-r1, r1 + 1)
    oy, ox = np.meshgrid(span, span, indexing="ij")
    keep = ox ** 2 + oy ** 2 < r1 ** 2
    return np.stack([ox[keep], oy[keep]], axis=1).astype(np.float64)


@dataclass
class SupervisedPoint:
    """What the losses need to know about one handle point."""

    p0: Tuple[int, int]
    p: Tuple[int, int]
    t: Tuple[int, int]
    converged: bool = False
    r1: int = 3


def _patch_positions(center, d, r1, height, width):
    """Disk cells around center paired with their displaced sample spots.

    Cells whose displaced position would leave the field are clipped out;
    an empty result raises DegeneratePatchError.
    """
    offsets = disk_offsets(r1)
    cells = offsets + np.asarray(center, dtype=np.float64)
    moved = cells + d
    ok = (
        (cells[:, 0] >= 0) & (cells[:, 0] <= width - 1)
        & (cells[:, 1] >= 0) & (cells[:, 1] <= height - 1)
        & (moved[:, 0] >= 0) & (moved[:, 0] <= width - 1)
        & (moved[:, 1] >= 0) & (moved[:, 1] <= height - 1)
    )
    if not np.any(ok):
        raise DegeneratePatchError(
            f"supervision patch around {tuple(center)} fully clipped")
    return cells[ok], moved[ok], offsets[ok]


def _mask_term(field: Tensor, field0: np.ndarray, mask: np.ndarray,
               eta: float) -> Tensor:
    if eta == 0.0:
        return Tensor(0.0, requires_grad=False, _check=False)
    diff = field - Tensor(field0, requires_grad=False, _check=False)
    return masked_abs_sum(diff, 1.0 - mask) * eta


def loss_dynamic(field: Tensor, field0: np.ndarray,
                 points: Iterable[SupervisedPoint], mask: np.ndarray,
                 eta: float) -> Tensor:
    """Detached-reference drag loss plus the out-of-mask change penalty.

    Converged points contribute only through the mask term.
    """
    _, height, width = field.values.shape
    total: Tensor = _mask_term(field, field0, mask, eta)
    for pt in points:
        if pt.converged:
            continue
        d = deviation_vector(pt.p, pt.t)
        cells, moved, _ = _patch_positions(pt.p, d, pt.r1, height, width)
        xi = cells[:, 0].astype(np.int64)
        yi = cells[:, 1].astype(np.int64)
        reference = field.values[:, yi, xi]            # detached by construction
        samples = bilinear_sample_many(field, moved)   # gradient flows here
        total = total + (Tensor(reference, _check=False) - samples).l1()
    return total


def loss_template(field: Tensor, field0: np.ndarray,
                  points: Iterable[SupervisedPoint], mask: np.ndarray,
                  eta: float) -> Tensor:
    """Template-anchored drag loss: the reference is the frozen step-0
    feature around each initial point; the moving side samples around the
    current point displaced by the deviation vector."""
    _, height, width = field.values.shape
    total: Tensor = _mask_term(field, field0, mask, eta)
    for pt in points:
        if pt.converged:
            continue
        d = deviation_vector(pt.p, pt.t)
        # pair template cell p0+o with sample at p+o+d; clip on either side
        offsets = disk_offsets(pt.r1)
        tcells = offsets + np.asarray(pt.p0, dtype=np.float64)
        moved = offsets + np.asarray(pt.p, dtype=np.float64) + d
        ok = (
            (tcells[:, 0] >= 0) & (tcells[:, 0] <= width - 1)
            & (tcells[:, 1] >= 0) & (tcells[:, 1] <= height - 1)
            & (moved[:, 0] >= 0) & (moved[:, 0] <= width - 1)
            & (moved[:, 1] >= 0) & (moved[:, 1] <= height - 1)
        )
        if not np.any(ok):
            raise DegeneratePatchError(
                f"template patch around {pt.p0} fully clipped")
        xi = tcells[ok][:, 0].astype(np.int64)
        yi = tcells[ok][:, 1].astype(np.int64)
        reference = field0[:, yi, xi]                  # frozen, zero gradient
        samples = bilinear_sample_many(field, moved[ok])
        total = total + (Tensor(reference, _check=False) - samples).l1()
    return total


def select_loss(s_i: Optional[float], s_1: Optional[float], tau: float) -> str:
    """Confidence gate: dynamic iff s_i > tau * s_1 (boundary -> template).

    Step 1 has no prior confidence, so the gate returns the dynamic loss
    unconditionally.
    """
    if not 0.0 <= tau <= 1.0:
        raise ShapeError(f"tau must lie in [0, 1], got {tau}")
    if s_i is None or s_1 is None:
        return DYNAMIC
    return DYNAMIC if s_i > tau * s_1 else TEMPLATE


def supervision_step(session, which) -> float:
    """One Adam step on the session latent against the chosen loss.

    ``which`` may be a single gate decision or one per point; the loss is
    assembled per point so mixed gates are supported.  Returns the scalar
    loss before the step.  Non-finite losses or gradients raise
    NumericError; the caller marks the session failed.
    """
    from .field import generate

    cfg = session.config
    if isinstance(which, str):
        which = [which] * len(session.points)
    if len(which) != len(session.points):
        raise ShapeError("one gate decision per point required")

    w_leaf = Tensor(session.w.values.copy(), requires_grad=True)
    # session.F was regenerated for this exact latent at the end of the
    # previous step (or is F0 before step 1), so the forward is a reuse
    cached = session.F.values if np.array_equal(
        session.F.latent_snapshot, session.w.values) else None
    fld = generate(session.spec, w_leaf, scenario_id=session.scenario_id,
                   cached_values=cached)
    field0 = session.F0.values

    dyn_points = [sp for sp, g in zip(_supervised(session), which)
                  if g == DYNAMIC and not sp.converged]
    tmpl_points = [sp for sp, g in zip(_supervised(session), which)
                   if g == TEMPLATE and not sp.converged]

    total = loss_dynamic(fld.tensor, field0, dyn_points, session.mask, cfg.eta)
    if tmpl_points:
        # the mask term is shared; only the patch terms differ per gate
        total = total + loss_template(fld.tensor, field0, tmpl_points,
                                      session.mask, 0.0)
    loss_value = total.item()
    if not math.isfinite(loss_value):
        raise NumericError("supervision loss is not finite")

    total.backward()
    grad = w_leaf.grad if w_leaf.grad is not None else np.zeros_like(w_leaf.values)
    if not np.all(np.isfinite(grad)):
        raise NumericError("latent gradient is not finite")

    session.w.values = session.adam.step(session.w.values, grad)
    return loss_value


def _supervised(session) -> List[SupervisedPoint]:
    return [SupervisedPoint(p0=pt.p0, p=pt.p, t=pt.t, converged=pt.converged,
                            r1=session.config.r1)
            for pt in session.points]
