"""Compiled Euler-Maruyama kernel shared by both samplers.

Each sample is integrated on its own; a rejected interval is split in two
and its increment refined by a Brownian bridge.  The normals are the same
counter-based Philox/Box-Muller variates as :mod:`nibridge.rng`, keyed by
(seed, sample, step, stream) with stream 0 for a step's root increment and
``node + 1`` for the refinement of tree node ``node``.
"""
from __future__ import annotations

import math

import numba
import numpy as np

STEP_FLOOR = 1e-12
MAX_DEPTH = 30
RCOND_MIN = 1e-14
G_SLACK = 0.1

KIND_CONFLUENT = 0
KIND_FLOW = 1
KIND_GRID = 2
KIND_EXACT = 3

OK = 0
ERR_CONDITIONING = 1
ERR_WINDOW = 2
ERR_FLOOR = 3

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S20 = np.uint64(20)
_S5 = np.uint64(5)
_S6 = np.uint64(6)
_S26 = np.uint64(26)

_jit = numba.njit(cache=True, nogil=True)


@_jit
def _normals(seed, sample, step, stream, out):
    k0s = np.uint64(seed) & _MASK
    k1s = np.uint64(seed) >> _S32
    c1s = np.uint64(step) & _MASK
    c2s = np.uint64(sample) & _MASK
    c3s = (((np.uint64(step) >> _S32) << _S20) ^ np.uint64(stream)) & _MASK
    n = out.size
    scale = 1.0 / 9007199254740992.0
    for p in range((n + 1) // 2):
        c0, c1, c2, c3 = np.uint64(p), c1s, c2s, c3s
        k0, k1 = k0s, k1s
        for _ in range(10):
            p0 = _M0 * c0
            p1 = _M1 * c2
            c0, c1, c2, c3 = ((p1 >> _S32) ^ c1 ^ k0, p1 & _MASK,
                              (p0 >> _S32) ^ c3 ^ k1, p0 & _MASK)
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
        u1 = ((c0 >> _S5) << _S26) | (c1 >> _S6)
        u2 = ((c2 >> _S5) << _S26) | (c3 >> _S6)
        f1 = (np.float64(u1) + 1.0) * scale
        f2 = np.float64(u2) * scale
        r = math.sqrt(-2.0 * math.log(f1))
        th = 2.0 * math.pi * f2
        out[2 * p] = r * math.cos(th)
        if 2 * p + 1 < n:
            out[2 * p + 1] = r * math.sin(th)


@_jit
def _interaction(x, out):
    n = x.size
    for i in range(n):
        out[i] = 0.0
    for i in range(n):
        xi = x[i]
        for j in range(i + 1, n):
            v = 1.0 / (xi - x[j])
            out[i] += v
            out[j] -= v


@_jit
def _grid_eval(t, x, out, times, tab_x, tab_g, offsets):
    """Returns the slice index of the window check, or -1 when ``x`` is inside."""
    nt = times.size
    # window of the nearest slice
    kw = 0
    for k in range(1, nt):
        if abs(times[k] - t) < abs(times[kw] - t):
            kw = k
    lo = tab_x[offsets[kw]]
    hi = tab_x[offsets[kw + 1] - 1]
    slack = G_SLACK * (hi - lo) / 1.2
    for i in range(x.size):
        if x[i] < lo - slack or x[i] > hi + slack:
            return kw
    if nt == 1:
        out[:] = np.interp(x, tab_x[offsets[0]:offsets[1]], tab_g[offsets[0]:offsets[1]])
        return -1
    k = np.searchsorted(times, t, side="right") - 1
    k = min(max(k, 0), nt - 2)
    theta = (t - times[k]) / (times[k + 1] - times[k])
    theta = min(max(theta, 0.0), 1.0)
    g0 = np.interp(x, tab_x[offsets[k]:offsets[k + 1]], tab_g[offsets[k]:offsets[k + 1]])
    g1 = np.interp(x, tab_x[offsets[k + 1]:offsets[k + 2]], tab_g[offsets[k + 1]:offsets[k + 2]])
    for i in range(x.size):
        out[i] = (1.0 - theta) * g0[i] + theta * g1[i]
    return -1


@_jit
def _exact_drift(t, x, b, out, work):
    """``(1/n) grad log p_{1-t}(x, b)``; returns rcond of the kernel matrix."""
    n = x.size
    tau = 1.0 - t
    m = work[0]
    inv = work[1]
    for i in range(n):
        top = -np.inf
        for j in range(n):
            e = -n * (x[i] - b[j]) ** 2 / (2.0 * tau)
            m[i, j] = e
            top = max(top, e)
        for j in range(n):
            m[i, j] = math.exp(m[i, j] - top)
    norm_m = 0.0
    for j in range(n):
        s = 0.0
        for i in range(n):
            s += abs(m[i, j])
        norm_m = max(norm_m, s)
    # Gauss-Jordan with partial pivoting on [a | I]
    a = work[2]
    a[:, :] = m
    for i in range(n):
        for j in range(n):
            inv[i, j] = 1.0 if i == j else 0.0
    for c in range(n):
        p = c
        for r in range(c + 1, n):
            if abs(a[r, c]) > abs(a[p, c]):
                p = r
        if a[p, c] == 0.0 or not math.isfinite(a[p, c]):
            return 0.0
        if p != c:
            for j in range(n):
                a[c, j], a[p, j] = a[p, j], a[c, j]
                inv[c, j], inv[p, j] = inv[p, j], inv[c, j]
        d = 1.0 / a[c, c]
        for j in range(n):
            a[c, j] *= d
            inv[c, j] *= d
        for r in range(n):
            if r != c:
                f = a[r, c]
                if f != 0.0:
                    for j in range(n):
                        a[r, j] -= f * a[c, j]
                        inv[r, j] -= f * inv[c, j]
    norm_inv = 0.0
    for j in range(n):
        s = 0.0
        for i in range(n):
            s += abs(inv[i, j])
        norm_inv = max(norm_inv, s)
    rcond = 1.0 / (norm_m * norm_inv)
    if not math.isfinite(rcond):
        return 0.0
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += m[i, j] * b[j] * inv[j, i]
        out[i] = (s - x[i]) / tau
    return rcond


@_jit
def _velocity(kind, t, x, out, tmp, params, b, times, tab_x, tab_g, offsets, work):
    """Fills ``out``; returns (status, detail)."""
    n = x.size
    if kind == KIND_EXACT:
        rcond = _exact_drift(t, x, b, out, work)
        if rcond < RCOND_MIN:
            return ERR_CONDITIONING, rcond
        return OK, 0.0
    _interaction(x, tmp)
    if kind == KIND_GRID:
        k = _grid_eval(t, x, out, times, tab_x, tab_g, offsets)
        if k >= 0:
            return ERR_WINDOW, float(k)
        for i in range(n):
            out[i] += tmp[i] / n
        return OK, 0.0
    if kind == KIND_CONFLUENT:
        c = params[0]
        alpha = c / (1.0 - t)
        beta = -1.0 / (1.0 - t)
    else:
        ca, va, cb, vb, kk = params[0], params[1], params[2], params[3], params[4]
        v = (1.0 - t) * va + t * vb + kk * t * (1.0 - t)
        dv = vb - va + kk * (1.0 - 2.0 * t)
        if v > 0.0:
            beta = (dv - 1.0) / (2.0 * v)
        else:
            # point-mass start at t = 0: removable singularity, limit by l'Hopital
            beta = -kk / dv
        alpha = (cb - ca) - ((1.0 - t) * ca + t * cb) * beta
    for i in range(n):
        out[i] = tmp[i] / n + alpha + beta * x[i]
    return OK, 0.0


@_jit
def _min_gap(x):
    g = np.inf
    for i in range(x.size - 1):
        g = min(g, x[i + 1] - x[i])
    return g


@_jit
def integrate(x0, rows, seed, ts, slot, out, kind, params, b, times, tab_x, tab_g,
              offsets, counters, err):
    """Integrate every row of ``x0`` along ``ts``; records into ``out[:, slot[step]]``.

    ``counters`` receives (refinements, reflections).  On failure returns
    the error code and fills ``err`` with (row, t, h, step, detail) plus
    the state at failure in ``err[5:]``.
    """
    m, n = x0.shape
    nsteps = ts.size - 1
    cap_depth = MAX_DEPTH + 1
    node = np.zeros(cap_depth, dtype=np.int64)
    hs = np.zeros(cap_depth)
    dws = np.zeros((cap_depth, n))
    z = np.empty(n)
    vel = np.empty(n)
    tmp = np.empty(n)
    new = np.empty(n)
    work = np.empty((3, n, n)) if kind == KIND_EXACT else np.empty((3, 1, 1))
    sqn = math.sqrt(n)
    gmin = 2.0 * math.sqrt(STEP_FLOOR / n) if n > 1 else 0.0
    refinements = 0
    reflections = 0
    for r in range(m):
        x = x0[r].copy()
        row = rows[r]
        for g in range(nsteps):
            h0 = ts[g + 1] - ts[g]
            _normals(seed, row, g, 0, z)
            node[0] = 1
            hs[0] = h0
            for i in range(n):
                dws[0, i] = math.sqrt(h0) * z[i]
            top = 1
            t = ts[g]
            while top > 0:
                k = top - 1
                # halvings left before the step floor or the tree depth limit
                left = min(int(math.floor(math.log2(hs[k] / STEP_FLOOR))),
                           MAX_DEPTH - 1 - int(math.floor(math.log2(node[k]))),
                           cap_depth - 1 - top)
                left = max(left, 0)
                if n > 1:
                    # gap cap, enforced before spending a drift evaluation
                    cap = n * _min_gap(x) ** 2 / 4.0
                    need = 0
                    if hs[k] > cap:
                        need = int(math.ceil(math.log2(hs[k] / cap)))
                    need = min(need, left)
                    for _ in range(need):
                        k = top - 1
                        _split(seed, row, g, node, hs, dws, top, z)
                        top += 1
                        refinements += 1
                    left -= need
                k = top - 1
                h = hs[k]
                status, detail = _velocity(kind, t, x, vel, tmp, params, b, times,
                                           tab_x, tab_g, offsets, work)
                if status != OK:
                    err[0], err[1], err[2], err[3], err[4] = r, t, h, g, detail
                    err[5:5 + n] = x
                    return status
                ordered = True
                for i in range(n):
                    new[i] = x[i] + dws[k, i] / sqn + h * vel[i]
                    if not math.isfinite(new[i]):
                        ordered = False
                # gaps below gmin cannot be resolved above the step floor
                for i in range(n - 1):
                    if not new[i + 1] - new[i] >= gmin:
                        ordered = False
                if not ordered and left == 0:
                    # a pair this close behaves like a reflected Bessel process:
                    # crossings within the noise scale are reflected at gmin,
                    # larger ones fail
                    overlap = -np.inf
                    finite = True
                    for i in range(n):
                        finite = finite and math.isfinite(new[i])
                    for i in range(n - 1):
                        overlap = max(overlap, new[i] - new[i + 1])
                    if not (finite and overlap < 10.0 * math.sqrt(h)):
                        err[0], err[1], err[2], err[3], err[4] = r, t, h, g, overlap
                        err[5:5 + n] = x
                        return ERR_FLOOR
                    new.sort()
                    for i in range(n - 1):
                        if new[i + 1] - new[i] < gmin:
                            mid = 0.5 * (new[i] + new[i + 1])
                            new[i] = mid - 0.5 * gmin
                            new[i + 1] = mid + 0.5 * gmin
                    for i in range(n - 1):
                        if not new[i + 1] > new[i]:
                            err[0], err[1], err[2], err[3], err[4] = r, t, h, g, 0.0
                            err[5:5 + n] = x
                            return ERR_FLOOR
                    ordered = True
                    reflections += 1
                if ordered:
                    x[:] = new
                    t += h
                    top -= 1
                else:
                    _split(seed, row, g, node, hs, dws, top, z)
                    top += 1
                    refinements += 1
            if slot[g + 1] >= 0:
                out[r, slot[g + 1]] = x
    counters[0] += refinements
    counters[1] += reflections
    return OK


@_jit
def _split(seed, row, step, node, hs, dws, top, z):
    """Halve the top interval: the right half replaces it, the left half goes on top."""
    k = top - 1
    nd = node[k]
    h = hs[k]
    _normals(seed, row, step, nd + 1, z)
    sh = 0.5 * math.sqrt(h)
    for i in range(z.size):
        left = 0.5 * dws[k, i] + sh * z[i]
        dws[k + 1, i] = left
        dws[k, i] = dws[k, i] - left
    node[k] = 2 * nd + 1
    node[k + 1] = 2 * nd
    hs[k] = h / 2.0
    hs[k + 1] = h / 2.0
