"""Pure-numpy implementations of the hot kernels.

Import-time fallback when the compiled core is unavailable; also the
reference the compiled core is tested against.
"""

from __future__ import annotations

import numpy as np

BACKEND = "numpy"


def field_forward(centers, sigmas, amps, sigs, height, width):
    """Sum of isotropic Gaussian blobs, channel-weighted -> CxHxW.

    centers: Bx2 (x, y) pixels; sigs: BxC unit-norm signatures.
    """
    centers = np.asarray(centers, dtype=np.float64)
    nblobs = centers.shape[0]
    nch = np.asarray(sigs).shape[1] if nblobs else 0
    out = np.zeros((nch, height, width), dtype=np.float64)
    if nblobs == 0:
        return out
    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    for b in range(nblobs):
        dx2 = (xs - centers[b, 0]) ** 2
        dy2 = (ys - centers[b, 1]) ** 2
        g = amps[b] * np.exp(-(dy2[:, None] + dx2[None, :]) / (2.0 * sigmas[b] ** 2))
        out += sigs[b][:, None, None] * g[None, :, :]
    return out


def field_backward(centers, sigmas, amps, sigs, upstream):
    """Gradient of sum(upstream * field) w.r.t. blob centers -> Bx2."""
    centers = np.asarray(centers, dtype=np.float64)
    nblobs = centers.shape[0]
    grad = np.zeros((nblobs, 2), dtype=np.float64)
    if nblobs == 0:
        return grad
    _, height, width = upstream.shape
    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    for b in range(nblobs):
        dx = xs - centers[b, 0]
        dy = ys - centers[b, 1]
        g = amps[b] * np.exp(-(dy[:, None] ** 2 + dx[None, :] ** 2)
                             / (2.0 * sigmas[b] ** 2))
        # channel-collapse the upstream against this blob's signature
        up = np.einsum("c,chw->hw", sigs[b], upstream)
        common = up * g / sigmas[b] ** 2
        grad[b, 0] = np.sum(common * dx[None, :])
        grad[b, 1] = np.sum(common * dy[:, None])
    return grad


def masked_l1_forward(values, weight):
    """sum over channels/pixels of |values| * weight (weight is HxW)."""
    return float(np.einsum("chw,hw->", np.abs(values), weight))


def masked_l1_backward(values, weight, upstream):
    return upstream * np.sign(values) * weight[None, :, :]


def fused_score(patch, template, z, lam):
    """lam * exp(-mean_c|patch - template|) + (1 - lam) * (z . patch)."""
    diff = np.abs(patch - template[:, None, None]).mean(axis=0)
    response = np.einsum("chw,c->hw", patch, z)
    return lam * np.exp(-diff) + (1.0 - lam) * response


def train_filter(patch, label, z0, iters, step_size, snap_every=0):
    """Gradient descent on the squared score-vs-label error, filter only.

    Returns (z, trace, snapshots): trace has iters+1 entries (loss before
    each update plus the final loss); snapshots are (iteration, score grid)
    pairs taken every snap_every iterations (0 disables, final always kept
    when enabled).
    """
    z = np.array(z0, dtype=np.float64, copy=True)
    patch = np.asarray(patch, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    trace = np.empty(iters + 1, dtype=np.float64)
    snaps = []
    for it in range(iters):
        score = np.einsum("chw,c->hw", patch, z)
        resid = score - label
        trace[it] = float(np.sum(resid * resid))
        if snap_every and it % snap_every == 0:
            snaps.append((it, score.copy()))
        grad = 2.0 * np.einsum("chw,hw->c", patch, resid)
        z -= step_size * grad
    score = np.einsum("chw,c->hw", patch, z)
    resid = score - label
    trace[iters] = float(np.sum(resid * resid))
    if snap_every:
        snaps.append((iters, score.copy()))
    return z, trace, snaps
