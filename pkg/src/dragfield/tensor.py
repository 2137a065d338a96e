"""Dense float64 tensors with reverse-mode gradients.

Deliberately small: the drag losses need elementwise arithmetic, exp,
absolute-value reductions, bilinear sampling and a 1x1 convolution, on
fields no larger than 64x256x256.  Operations record themselves on an
implicit tape (creation-ordered closures); ``backward`` replays it once
in reverse.  Broadcasting is scalar-vs-tensor only.
"""

from __future__ import annotations

import itertools
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import BoundsError, NumericError, ShapeError

Scalar = Union[int, float]

_ids = itertools.count()


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")


class Tensor:
    """A dense float64 grid, optionally tracking gradients.

    Invariants: values are always finite (checked at construction and on
    op outputs that can overflow); ``grad`` when present matches the value
    shape exactly.
    """

    __slots__ = ("values", "requires_grad", "grad", "_parents", "_backward", "_nid")

    def __init__(self, values, requires_grad: bool = False, _check: bool = True):
        arr = np.asarray(values, dtype=np.float64)
        if _check:
            _check_finite(arr, "tensor values")
        self.values = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._backward: Optional[Callable[[], None]] = None
        self._nid = next(_ids)

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def __repr__(self) -> str:
        req = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.values.shape}{req})"

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError("item() needs a single-element tensor")
        return float(self.values.reshape(()))

    def detach(self) -> "Tensor":
        """Same values, no gradient flow."""
        return Tensor(self.values, requires_grad=False, _check=False)

    # -- graph plumbing -------------------------------------------------

    def _accumulate(self, g: np.ndarray, owned: bool = False) -> None:
        # `owned` marks a freshly allocated array the graph may adopt,
        # skipping a defensive copy on first touch.
        if self.grad is None:
            if owned and isinstance(g, np.ndarray) and g.shape == self.values.shape:
                self.grad = g
            else:
                self.grad = np.array(np.broadcast_to(g, self.values.shape),
                                     dtype=np.float64)
        else:
            self.grad += g

    def backward(self, seed: Optional[np.ndarray] = None) -> None:
        """Reverse sweep from this tensor; seeds with ones for scalars.

        The swept subgraph is released afterwards (closures hold cycles
        that would otherwise wait on the garbage collector); a graph is
        single-shot — build it again to differentiate again.
        """
        if seed is None:
            if self.values.size != 1:
                raise ShapeError("backward() on non-scalar output needs a seed")
            seed = np.ones_like(self.values)
        else:
            seed = np.asarray(seed, dtype=np.float64)
            if seed.shape != self.values.shape:
                raise ShapeError("seed shape does not match output shape")

        # Collect the reachable subgraph; creation ids give a valid
        # topological order because inputs always predate outputs.
        tape: list[Tensor] = []
        seen = set()
        stack = [self]
        while stack:
            t = stack.pop()
            if id(t) in seen or not t.requires_grad:
                continue
            seen.add(id(t))
            tape.append(t)
            stack.extend(t._parents)
        tape.sort(key=lambda t: t._nid)

        self._accumulate(seed)
        for t in reversed(tape):
            if t._backward is not None:
                t._backward()
        for t in tape:
            t._backward = None
            t._parents = ()

    # -- arithmetic ------------------------------------------------------

    def _binary(self, other, forward, back_self, back_other,
                check=False, owned=(False, False)) -> "Tensor":
        # add/sub/mul of finite operands stay finite at engine magnitudes;
        # exp is the overflow risk and keeps its check.
        if isinstance(other, Tensor):
            if other.shape != self.shape and other.size != 1 and self.size != 1:
                raise ShapeError(f"shape mismatch: {self.shape} vs {other.shape}")
            ovals = other.values
        else:
            ovals = np.float64(other)
            other = None
        out = Tensor(forward(self.values, ovals), requires_grad=self.requires_grad
                     or (other is not None and other.requires_grad), _check=check)
        if out.requires_grad:
            out._parents = (self,) if other is None else (self, other)

            def _bw():
                g = out.grad
                if self.requires_grad:
                    self._accumulate(_reduce_to(back_self(g, self.values, ovals),
                                                self.shape), owned=owned[0])
                if other is not None and other.requires_grad:
                    other._accumulate(_reduce_to(back_other(g, self.values, ovals),
                                                 other.shape), owned=owned[1])

            out._backward = _bw
        return out

    def __add__(self, other):
        return self._binary(other, lambda a, b: a + b,
                            lambda g, a, b: g, lambda g, a, b: g)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, lambda a, b: a - b,
                            lambda g, a, b: g, lambda g, a, b: -g,
                            owned=(False, True))

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        return self._binary(other, lambda a, b: a * b,
                            lambda g, a, b: g * b, lambda g, a, b: g * a,
                            owned=(True, True))

    __rmul__ = __mul__

    def __neg__(self):
        out = Tensor(-self.values, requires_grad=self.requires_grad, _check=False)
        if out.requires_grad:
            out._parents = (self,)
            out._backward = lambda: self._accumulate(-out.grad, owned=True)
        return out

    def exp(self) -> "Tensor":
        with np.errstate(over="ignore"):
            vals = np.exp(self.values)
        out = Tensor(vals, requires_grad=self.requires_grad)
        if out.requires_grad:
            out._parents = (self,)
            out._backward = lambda: self._accumulate(out.grad * vals, owned=True)
        return out

    def sum(self) -> "Tensor":
        out = Tensor(self.values.sum(), requires_grad=self.requires_grad, _check=False)
        if out.requires_grad:
            out._parents = (self,)
            out._backward = lambda: self._accumulate(
                np.full_like(self.values, float(out.grad)), owned=True)
        return out

    def mean(self) -> "Tensor":
        n = self.values.size
        out = Tensor(self.values.mean(), requires_grad=self.requires_grad, _check=False)
        if out.requires_grad:
            out._parents = (self,)
            out._backward = lambda: self._accumulate(
                np.full_like(self.values, float(out.grad) / n), owned=True)
        return out

    def l1(self) -> "Tensor":
        """Sum of absolute values; the subgradient at exactly 0 is 0."""
        out = Tensor(np.abs(self.values).sum(), requires_grad=self.requires_grad,
                     _check=False)
        if out.requires_grad:
            out._parents = (self,)
            out._backward = lambda: self._accumulate(
                float(out.grad) * np.sign(self.values), owned=True)
        return out


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Collapse a gradient to the scalar operand's shape if needed."""
    g = np.asarray(g)
    if g.shape == shape:
        return g
    if shape == () or int(np.prod(shape)) == 1:
        return g.sum().reshape(shape)
    return np.broadcast_to(g, shape).copy()


def l1_norm(x: Tensor) -> Tensor:
    return x.l1()


def bilinear_sample(field: Tensor, pos) -> Tensor:
    """Sample a CxHxW field at one continuous (x, y) position.

    x indexes width, y height; integer positions hit grid cells exactly.
    Out-of-bounds positions raise BoundsError — callers clamp explicitly.
    Differentiable w.r.t. the field and, when pos is a Tensor, w.r.t. pos.
    """
    if not isinstance(pos, Tensor):
        pos = np.asarray(pos, dtype=np.float64).reshape(1, 2)
    out = bilinear_sample_many(field, pos)
    # out is Cx1; flatten to C
    squeezed = Tensor(out.values[:, 0], requires_grad=out.requires_grad, _check=False)
    if squeezed.requires_grad:
        squeezed._parents = (out,)
        squeezed._backward = lambda: out._accumulate(squeezed.grad[:, None])
    return squeezed


def bilinear_sample_many(field: Tensor, positions) -> Tensor:
    """Sample a CxHxW field at K continuous (x, y) positions -> CxK."""
    if field.values.ndim != 3:
        raise ShapeError("bilinear sampling expects a CxHxW field")
    pos_t = positions if isinstance(positions, Tensor) else None
    pts = np.asarray(pos_t.values if pos_t is not None else positions,
                     dtype=np.float64).reshape(-1, 2)
    _, h, w = field.values.shape
    x, y = pts[:, 0], pts[:, 1]
    if np.any(x < 0) or np.any(x > w - 1) or np.any(y < 0) or np.any(y > h - 1):
        raise BoundsError("sample position outside field")

    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)

    f = field.values
    v00 = f[:, y0, x0]
    v01 = f[:, y0, x1]
    v10 = f[:, y1, x0]
    v11 = f[:, y1, x1]
    w00 = (1.0 - fx) * (1.0 - fy)
    w01 = fx * (1.0 - fy)
    w10 = (1.0 - fx) * fy
    w11 = fx * fy
    vals = v00 * w00 + v01 * w01 + v10 * w10 + v11 * w11

    needs = field.requires_grad or (pos_t is not None and pos_t.requires_grad)
    out = Tensor(vals, requires_grad=needs, _check=False)
    if needs:
        out._parents = tuple(p for p in (field, pos_t) if p is not None)

        def _bw():
            g = out.grad  # CxK
            if field.requires_grad:
                # np.zeros callocs: untouched pages stay cheap under the
                # sparse scatter; dense accumulations pay only when used
                gf = np.zeros(field.values.shape, dtype=np.float64)
                np.add.at(gf, (slice(None), y0, x0), g * w00)
                np.add.at(gf, (slice(None), y0, x1), g * w01)
                np.add.at(gf, (slice(None), y1, x0), g * w10)
                np.add.at(gf, (slice(None), y1, x1), g * w11)
                field._accumulate(gf, owned=True)
            if pos_t is not None and pos_t.requires_grad:
                # d(out)/dx per sample, channel-summed against upstream
                dx = (v01 - v00) * (1.0 - fy) + (v11 - v10) * fy
                dy = (v10 - v00) * (1.0 - fx) + (v11 - v01) * fx
                gp = np.stack([(g * dx).sum(axis=0), (g * dy).sum(axis=0)], axis=1)
                pos_t._accumulate(gp.reshape(pos_t.values.shape), owned=True)

        out._backward = _bw
    return out


def conv1x1(patch: Tensor, z: Tensor) -> Tensor:
    """Per-position inner product of a Cxhxw patch with a C-filter -> hxw."""
    if patch.values.ndim != 3 or z.values.ndim != 1:
        raise ShapeError("conv1x1 expects Cxhxw patch and C filter")
    if patch.values.shape[0] != z.values.shape[0]:
        raise ShapeError(
            f"channel mismatch: {patch.values.shape[0]} vs {z.values.shape[0]}")
    vals = np.einsum("chw,c->hw", patch.values, z.values)
    out = Tensor(vals, requires_grad=patch.requires_grad or z.requires_grad,
                 _check=False)
    if out.requires_grad:
        out._parents = (patch, z)

        def _bw():
            g = out.grad
            if patch.requires_grad:
                patch._accumulate(np.einsum("hw,c->chw", g, z.values), owned=True)
            if z.requires_grad:
                z._accumulate(np.einsum("chw,hw->c", patch.values, g), owned=True)

        out._backward = _bw
    return out


def masked_abs_sum(x: Tensor, weight: np.ndarray) -> Tensor:
    """sum(|x| * weight) with weight broadcast over leading axes."""
    from . import kernels

    w = np.asarray(weight, dtype=np.float64)
    val = kernels.masked_l1_forward(np.ascontiguousarray(x.values), w)
    out = Tensor(val, requires_grad=x.requires_grad, _check=False)
    if out.requires_grad:
        out._parents = (x,)
        out._backward = lambda: x._accumulate(
            kernels.masked_l1_backward(x.values, w, float(out.grad)), owned=True)
    return out


def finite_difference_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    The denominator is max(|analytic|, |numeric|, 1e-8) per coordinate.
    """
    base = np.asarray(x.values if isinstance(x, Tensor) else x,
                      dtype=np.float64).copy()
    leaf = Tensor(base.copy(), requires_grad=True)
    out = f(leaf)
    out.backward()
    analytic = leaf.grad.copy() if leaf.grad is not None else np.zeros_like(base)

    numeric = np.zeros_like(base)
    flat = base.reshape(-1)
    nflat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(Tensor(base.copy(), requires_grad=False)).item()
        flat[i] = orig - eps
        lo = f(Tensor(base.copy(), requires_grad=False)).item()
        flat[i] = orig
        nflat[i] = (hi - lo) / (2.0 * eps)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
