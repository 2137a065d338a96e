# Fused hot kernels: blob-field forward/backward, masked L1, score map,
# filter training loop.  Mirrors numpy_impl's API; results agree with it
# to rounding (summation order differs).

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs

cnp.import_array()

BACKEND = "compiled"


def field_forward(centers, sigmas, amps, sigs, int height, int width):
    centers_a = np.ascontiguousarray(centers, dtype=np.float64).reshape(-1, 2)
    sigs_a = np.ascontiguousarray(sigs, dtype=np.float64)
    cdef Py_ssize_t nblobs = centers_a.shape[0]
    cdef Py_ssize_t nch = sigs_a.shape[1] if nblobs else 0
    out_a = np.zeros((nch, height, width), dtype=np.float64)
    if nblobs == 0:
        return out_a
    sigmas_a = np.ascontiguousarray(sigmas, dtype=np.float64)
    amps_a = np.ascontiguousarray(amps, dtype=np.float64)

    cdef double[:, ::1] ctr = centers_a
    cdef double[::1] sig = sigmas_a
    cdef double[::1] amp = amps_a
    cdef double[:, ::1] sgn = sigs_a
    cdef double[:, :, ::1] out = out_a
    cdef Py_ssize_t b, c, y, x, k, nact
    cdef double inv2s2, cx, cy, dy2, g, a

    # per-blob active-channel lists: signatures are sparse in practice
    act_a = np.empty(nch, dtype=np.int64)
    row_a = np.empty(width, dtype=np.float64)
    cdef long long[::1] act = act_a
    cdef double[::1] row = row_a

    for b in range(nblobs):
        nact = 0
        for c in range(nch):
            if sgn[b, c] != 0.0:
                act[nact] = c
                nact += 1
        inv2s2 = 1.0 / (2.0 * sig[b] * sig[b])
        cx = ctr[b, 0]
        cy = ctr[b, 1]
        a = amp[b]
        for y in range(height):
            dy2 = (y - cy) * (y - cy)
            for x in range(width):
                row[x] = a * exp(-((x - cx) * (x - cx) + dy2) * inv2s2)
            for k in range(nact):
                c = act[k]
                g = sgn[b, c]
                for x in range(width):
                    out[c, y, x] += g * row[x]
    return out_a


def field_backward(centers, sigmas, amps, sigs, upstream):
    centers_a = np.ascontiguousarray(centers, dtype=np.float64).reshape(-1, 2)
    cdef Py_ssize_t nblobs = centers_a.shape[0]
    grad_a = np.zeros((nblobs, 2), dtype=np.float64)
    if nblobs == 0:
        return grad_a
    up_a = np.ascontiguousarray(upstream, dtype=np.float64)
    sigmas_a = np.ascontiguousarray(sigmas, dtype=np.float64)
    amps_a = np.ascontiguousarray(amps, dtype=np.float64)
    sigs_a = np.ascontiguousarray(sigs, dtype=np.float64)

    cdef double[:, ::1] ctr = centers_a
    cdef double[::1] sig = sigmas_a
    cdef double[::1] amp = amps_a
    cdef double[:, ::1] sgn = sigs_a
    cdef double[:, :, ::1] up = up_a
    cdef double[:, ::1] grad = grad_a
    cdef Py_ssize_t nch = up_a.shape[0]
    cdef Py_ssize_t height = up_a.shape[1]
    cdef Py_ssize_t width = up_a.shape[2]
    cdef Py_ssize_t b, c, y, x, k, nact
    cdef double inv2s2, invs2, cx, cy, dx, dy, g, common, w, gx, gy

    # channel-collapsed upstream per blob, then the spatial moment sums
    collapsed_a = np.empty((height, width), dtype=np.float64)
    act_a = np.empty(nch, dtype=np.int64)
    cdef double[:, ::1] collapsed = collapsed_a
    cdef long long[::1] act = act_a
    for b in range(nblobs):
        nact = 0
        for c in range(nch):
            if sgn[b, c] != 0.0:
                act[nact] = c
                nact += 1
        collapsed[:, :] = 0.0
        for k in range(nact):
            c = act[k]
            w = sgn[b, c]
            for y in range(height):
                for x in range(width):
                    collapsed[y, x] += w * up[c, y, x]
        inv2s2 = 1.0 / (2.0 * sig[b] * sig[b])
        invs2 = 1.0 / (sig[b] * sig[b])
        cx = ctr[b, 0]
        cy = ctr[b, 1]
        gx = 0.0
        gy = 0.0
        for y in range(height):
            dy = y - cy
            for x in range(width):
                dx = x - cx
                g = amp[b] * exp(-(dx * dx + dy * dy) * inv2s2)
                common = collapsed[y, x] * g * invs2
                gx += common * dx
                gy += common * dy
        grad[b, 0] = gx
        grad[b, 1] = gy
    return grad_a


def masked_l1_forward(values, weight):
    vals_a = np.ascontiguousarray(values, dtype=np.float64)
    w_a = np.ascontiguousarray(weight, dtype=np.float64)
    cdef double[:, :, ::1] v = vals_a
    cdef double[:, ::1] w = w_a
    cdef Py_ssize_t c, y, x
    cdef double acc = 0.0
    for c in range(v.shape[0]):
        for y in range(v.shape[1]):
            for x in range(v.shape[2]):
                acc += fabs(v[c, y, x]) * w[y, x]
    return acc


def masked_l1_backward(values, weight, double upstream):
    vals_a = np.ascontiguousarray(values, dtype=np.float64)
    w_a = np.ascontiguousarray(weight, dtype=np.float64)
    out_a = np.empty_like(vals_a)
    cdef double[:, :, ::1] v = vals_a
    cdef double[:, ::1] w = w_a
    cdef double[:, :, ::1] out = out_a
    cdef Py_ssize_t c, y, x
    cdef double s
    for c in range(v.shape[0]):
        for y in range(v.shape[1]):
            for x in range(v.shape[2]):
                s = v[c, y, x]
                out[c, y, x] = upstream * w[y, x] * (
                    1.0 if s > 0.0 else (-1.0 if s < 0.0 else 0.0))
    return out_a


def fused_score(patch, template, z, double lam):
    patch_a = np.ascontiguousarray(patch, dtype=np.float64)
    tmpl_a = np.ascontiguousarray(template, dtype=np.float64)
    z_a = np.ascontiguousarray(z, dtype=np.float64)
    cdef Py_ssize_t nch = patch_a.shape[0]
    cdef Py_ssize_t h = patch_a.shape[1]
    cdef Py_ssize_t w = patch_a.shape[2]
    out_a = np.empty((h, w), dtype=np.float64)
    cdef double[:, :, ::1] p = patch_a
    cdef double[::1] t = tmpl_a
    cdef double[::1] zz = z_a
    cdef double[:, ::1] out = out_a
    cdef Py_ssize_t c, y, x
    cdef double diff, resp, invc = 1.0 / nch
    for y in range(h):
        for x in range(w):
            diff = 0.0
            resp = 0.0
            for c in range(nch):
                diff += fabs(p[c, y, x] - t[c])
                resp += p[c, y, x] * zz[c]
            out[y, x] = lam * exp(-diff * invc) + (1.0 - lam) * resp
    return out_a


def train_filter(patch, label, z0, int iters, double step_size, int snap_every=0):
    patch_a = np.ascontiguousarray(patch, dtype=np.float64)
    label_a = np.ascontiguousarray(label, dtype=np.float64)
    z_a = np.array(z0, dtype=np.float64, copy=True)
    cdef Py_ssize_t nch = patch_a.shape[0]
    cdef Py_ssize_t h = patch_a.shape[1]
    cdef Py_ssize_t w = patch_a.shape[2]
    trace_a = np.empty(iters + 1, dtype=np.float64)
    score_a = np.empty((h, w), dtype=np.float64)
    grad_a = np.empty(nch, dtype=np.float64)

    cdef double[:, :, ::1] p = patch_a
    cdef double[:, ::1] lbl = label_a
    cdef double[::1] z = z_a
    cdef double[::1] trace = trace_a
    cdef double[:, ::1] score = score_a
    cdef double[::1] grad = grad_a
    cdef Py_ssize_t it, c, y, x
    cdef double s, r, loss

    snaps = []
    for it in range(iters + 1):
        loss = 0.0
        for c in range(nch):
            grad[c] = 0.0
        for y in range(h):
            for x in range(w):
                s = 0.0
                for c in range(nch):
                    s += p[c, y, x] * z[c]
                score[y, x] = s
                r = s - lbl[y, x]
                loss += r * r
                for c in range(nch):
                    grad[c] += 2.0 * p[c, y, x] * r
        trace[it] = loss
        if snap_every and (it % snap_every == 0 or it == iters):
            snaps.append((it, score_a.copy()))
        if it == iters:
            break
        for c in range(nch):
            z[c] -= step_size * grad[c]
    return z_a, trace_a, snaps
