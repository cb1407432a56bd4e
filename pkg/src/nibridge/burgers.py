"""Limit shapes of nonintersecting Brownian bridges.

The limit shape is the minimiser ``(rho_t, u_t)`` of

    1/2 int_0^1 int (u^2 rho + pi^2/3 rho^3) dx dt

under the continuity equation with prescribed end densities.  Paths never
cross, so the flow is monotone: the particle of rank ``q`` sits at the
``q``-quantile ``X(q, t)`` of ``rho_t``.  In these coordinates
``rho = 1/X_q``, ``u = X_t`` and the action becomes

    1/2 int int (X_t^2 + pi^2/3 X_q^{-2}) dq dt,

a strictly convex functional of ``X``.  :func:`solve_characteristics`
discretises it and runs a damped Newton iteration; the complex slope
``f_t = u_t - i pi rho_t`` of the minimiser solves the complex Burgers
equation ``f_t + f f_x = 0`` inside the support.

When both end measures are semicircles (point masses included) the
minimiser stays semicircular; :class:`SemicircleFlow` gives it in closed
form, with variance ``(1-t) v_A + t v_B + k t (1-t)``,
``k = sqrt(1 + 4 v_A v_B) - v_A - v_B``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import measures
from .errors import (DomainError, FitError, SolverError, TopologyError,
                     ValidationError)
from .measures import AtomicMeasure, GridDensity

EDGE_WINDOW = 0.2      # fit edges where rho <= 20% of the peak
G_WINDOW = 0.1         # g_t is evaluated on the support widened by 10%
_PI2_3 = math.pi**2 / 3.0


class EdgeFit(NamedTuple):
    edge: float
    s: float
    residual: float


@dataclass(frozen=True)
class CharacteristicField:
    base_points: np.ndarray
    slopes: np.ndarray


@dataclass(frozen=True)
class SemicircleFlow:
    """Closed-form limit shape between two semicircles (variance 0 = point mass)."""

    center_a: float = 0.0
    var_a: float = 0.0
    center_b: float = 0.0
    var_b: float = 0.0

    @property
    def k(self):
        return math.sqrt(1.0 + 4.0 * self.var_a * self.var_b) - self.var_a - self.var_b

    def center(self, t):
        return (1.0 - t) * self.center_a + t * self.center_b

    def variance(self, t):
        return (1.0 - t) * self.var_a + t * self.var_b + self.k * t * (1.0 - t)

    def dvariance(self, t):
        return self.var_b - self.var_a + self.k * (1.0 - 2.0 * t)

    def edges(self, t):
        r = 2.0 * math.sqrt(self.variance(t))
        c = self.center(t)
        return c - r, c + r

    def edge_coeff(self, t):
        return self.variance(t) ** -0.75

    def density(self, t, points=measures.DEFAULT_POINTS):
        v = self.variance(t)
        if not v > 0:
            raise DomainError(f"degenerate (point-mass) slice at t={t}")
        return measures.semicircle(2.0 * math.sqrt(v), self.center(t), points=points)

    def velocity(self, t, x):
        v = self.variance(t)
        return (self.center_b - self.center_a) + (np.asarray(x) - self.center(t)) * self.dvariance(t) / (2.0 * v)

    def drift(self, t, x):
        """``g_t = u_t - H(rho_t)``; affine in ``x`` and valid on the whole line."""
        v = self.variance(t)
        return (self.center_b - self.center_a) + (np.asarray(x) - self.center(t)) * (self.dvariance(t) - 1.0) / (2.0 * v)


@dataclass(frozen=True, eq=False)
class LimitShape:
    """Time slices of the limit shape.

    ``velocities[i]`` is sampled on ``densities[i].grid``.  ``flow`` is set
    for closed-form shapes and then takes precedence in :func:`compute_g`.
    """

    times: np.ndarray
    densities: tuple
    velocities: tuple
    edges: np.ndarray
    edge_coeffs: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    flow: SemicircleFlow | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or np.any(np.diff(t) <= 0):
            raise ValidationError("shape times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "edges", np.asarray(self.edges, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "edge_coeffs", np.asarray(self.edge_coeffs, dtype=float).reshape(-1, 2))

    @property
    def pinned_end(self):
        """True when the terminal measure is a point mass (drift blows up at t=1)."""
        return self.flow is not None and self.flow.var_b == 0.0

    def slice_index(self, t, atol=1e-12):
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > atol:
            raise DomainError(f"t={t} is not a slice of this shape")
        return i

    def density_at(self, t):
        if self.flow is not None:
            return self.flow.density(t, points=self.densities[0].grid.size if self.densities else measures.DEFAULT_POINTS)
        return self.densities[self.slice_index(t)]

    def edge_at(self, t, side):
        col = 0 if side == "left" else 1
        if self.flow is not None:
            return self.flow.edges(t)[col], self.flow.edge_coeff(t)
        i = self.slice_index(t)
        return float(self.edges[i, col]), float(self.edge_coeffs[i, col])

    def complex_slope(self, i):
        """Grid and ``f = u - i pi rho`` on slice ``i``."""
        d = self.densities[i]
        return d.grid, self.velocities[i] - 1j * math.pi * d.values

    def characteristic_field(self):
        grid, f = self.complex_slope(0)
        return CharacteristicField(grid, f)

    @cached_property
    def _g_tables(self):
        return [_g_table(d, u) for d, u in zip(self.densities, self.velocities)]

    # ------------------------------------------------------------ persistence
    def to_dict(self):
        out = {
            "times": self.times.tolist(),
            "grids": [d.grid.tolist() for d in self.densities],
            "densities": [d.values.tolist() for d in self.densities],
            "velocities": [np.asarray(u).tolist() for u in self.velocities],
            "edges": self.edges.tolist(),
            "edge_coefficients": _nan_to_none(self.edge_coeffs.tolist()),
            "diagnostics": self.diagnostics,
        }
        if self.flow is not None:
            out["closed_form"] = {
                "kind": "semicircle_flow",
                "center_a": self.flow.center_a, "var_a": self.flow.var_a,
                "center_b": self.flow.center_b, "var_b": self.flow.var_b,
            }
        return out

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def from_dict(cls, d):
        dens = tuple(GridDensity.normalized(g, v) for g, v in zip(d["grids"], d["densities"]))
        flow = None
        cf = d.get("closed_form")
        if cf:
            flow = SemicircleFlow(cf["center_a"], cf["var_a"], cf["center_b"], cf["var_b"])
        coeffs = np.array([[np.nan if c is None else c for c in row] for row in d["edge_coefficients"]], dtype=float)
        return cls(np.array(d["times"]), dens, tuple(np.array(u) for u in d["velocities"]),
                   np.array(d["edges"]), coeffs, d.get("diagnostics", {}), flow)

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def _nan_to_none(rows):
    return [[None if (isinstance(c, float) and math.isnan(c)) else c for c in row] for row in rows]


# ------------------------------------------------------------ closed forms

def semicircle_flow_shape(flow, time_grid, points=measures.DEFAULT_POINTS):
    t = np.asarray(time_grid, dtype=float)
    dens, vel, edges, coeffs = [], [], [], []
    for ti in t:
        d = flow.density(ti, points)
        dens.append(d)
        vel.append(flow.velocity(ti, d.grid))
        edges.append(flow.edges(ti))
        s = flow.edge_coeff(ti)
        coeffs.append((s, s))
    diag = {"method": "closed_form", "iterations": 0, "final_mismatch": 0.0}
    return LimitShape(t, tuple(dens), tuple(vel), np.array(edges), np.array(coeffs), diag, flow)


def watermelon_shape(time_grid, points=measures.DEFAULT_POINTS):
    """Bridges from 0 back to 0: semicircle of radius ``2 sqrt(t(1-t))``."""
    t = np.asarray(time_grid, dtype=float)
    if np.any(t <= 0) or np.any(t >= 1):
        raise DomainError("watermelon slices must lie strictly inside (0, 1)")
    return semicircle_flow_shape(SemicircleFlow(), t, points)


# ------------------------------------------------------------- edge fits

def edge_coefficient(density, side):
    """Fit ``rho(x)^2 ~ (s/pi)^2 (x - a) (1 + c (x - a))`` at one end of the support.

    Uses the nodes next to the end where ``rho <= 0.2 max rho``.  Raises
    :class:`FitError` for hard edges or when the model does not fit.
    """
    if side not in ("left", "right"):
        raise ValidationError("side must be 'left' or 'right'")
    x, v = density.grid, density.values
    if side == "right":
        x, v = -x[::-1], v[::-1]
    peak = v.max()
    if v[0] > 1e-3 * peak:
        raise FitError(f"density does not vanish at the {side} end (hard edge)")
    above = np.nonzero(v > EDGE_WINDOW * peak)[0]
    stop = above[0] if above.size else v.size
    if stop < 5:
        raise FitError("too few grid nodes inside the edge window")
    d = x[:stop] - x[0]
    y = v[:stop] ** 2
    c2, c1, c0 = np.polyfit(d, y, 2)
    if not c1 > 0:
        raise FitError("no square-root onset at the edge")
    # root of the fitted quadratic closest to the end node
    d0 = -c0 / c1
    for _ in range(3):
        d0 -= (c0 + c1 * d0 + c2 * d0 * d0) / (c1 + 2 * c2 * d0)
    slope = c1 + 2 * c2 * d0
    if not slope > 0:
        raise FitError("no square-root onset at the edge")
    fitted = c0 + c1 * d + c2 * d * d
    residual = float(np.sqrt(np.mean((fitted - y) ** 2)) / y.max())
    if residual > 0.1:
        raise FitError(f"edge fit residual {residual:.3g} exceeds 10%")
    edge = x[0] + d0
    s = math.pi * math.sqrt(slope)
    if side == "right":
        edge = -edge
    return EdgeFit(float(edge), float(s), residual)


# -------------------------------------------------------- numerical solver

def _levels(xi):
    """Quantile levels clustered as ``xi**3`` at both ends (smootherstep)."""
    return xi**3 * (10.0 - 15.0 * xi + 6.0 * xi * xi)


def _time_nodes(k, required):
    base = np.sin(0.5 * math.pi * np.arange(k + 1) / k) ** 2
    base[0], base[-1] = 0.0, 1.0
    req = np.unique(np.asarray(required, dtype=float))
    if req.size == 0:
        return base
    spacing = np.diff(base).min() if k > 1 else 1.0
    keep = np.array([np.min(np.abs(req - b)) > 0.3 * max(spacing, _local_gap(base, i))
                     for i, b in enumerate(base)])
    keep[0] = keep[-1] = True
    nodes = np.unique(np.concatenate([base[keep], req, [0.0, 1.0]]))
    return nodes


def _local_gap(base, i):
    lo = base[i] - base[i - 1] if i > 0 else np.inf
    hi = base[i + 1] - base[i] if i < base.size - 1 else np.inf
    return min(lo, hi)


def _boundary_quantiles(mu, q):
    if isinstance(mu, AtomicMeasure):
        if np.ptp(mu.atoms) > 0:
            raise ValidationError("atomic boundary data must be a single point mass")
        return np.full(q.size, mu.atoms[0]), True
    _check_single_interval(mu)
    return measures.quantile_function(mu, q), False


def _check_single_interval(mu):
    inner = mu.values[1:-1]
    if np.any(inner <= 0):
        raise TopologyError("boundary density vanishes inside its support (more than one interval)")


class _Action:
    """Discretised action and its derivatives in the quantile coordinates."""

    def __init__(self, t, q, first, last):
        self.t = t
        self.dt = np.diff(t)
        self.tau = 0.5 * (self.dt[:-1] + self.dt[1:])
        self.dq = np.diff(q)
        m = np.zeros(q.size)
        m[:-1] += 0.5 * self.dq
        m[1:] += 0.5 * self.dq
        self.m = m
        self.first, self.last = first, last
        kk, jj = t.size - 2, q.size
        self.idx = np.arange(kk * jj).reshape(kk, jj)
        self.shape = (kk, jj)

    def full(self, inner):
        return np.vstack([self.first, inner, self.last])

    def value(self, inner):
        d = np.diff(inner, axis=1)
        if np.any(d <= 0):
            return np.inf
        x = self.full(inner)
        kin = np.sum(self.m * np.diff(x, axis=0) ** 2 / self.dt[:, None])
        pot = _PI2_3 * np.sum(self.tau[:, None] * self.dq**3 / d**2)
        return kin + pot

    def newton_system(self, inner):
        x = self.full(inner)
        vel = np.diff(x, axis=0) / self.dt[:, None]
        grad = 2.0 * self.m * (vel[:-1] - vel[1:])
        d = np.diff(inner, axis=1)
        de = -2.0 * _PI2_3 * self.tau[:, None] * self.dq**3 / d**3
        grad[:, 1:] += de
        grad[:, :-1] -= de
        h = 6.0 * _PI2_3 * self.tau[:, None] * self.dq**3 / d**4
        diag = np.broadcast_to(2.0 * self.m * (1.0 / self.dt[:-1] + 1.0 / self.dt[1:])[:, None], self.shape).copy()
        diag[:, 1:] += h
        diag[:, :-1] += h
        idx = self.idx
        off_t = -2.0 * self.m / self.dt[1:-1][:, None] * np.ones((self.shape[0] - 1, self.shape[1]))
        rows = [idx.ravel(), idx[:-1].ravel(), idx[1:].ravel(), idx[:, :-1].ravel(), idx[:, 1:].ravel()]
        cols = [idx.ravel(), idx[1:].ravel(), idx[:-1].ravel(), idx[:, 1:].ravel(), idx[:, :-1].ravel()]
        vals = [diag.ravel(), off_t.ravel(), off_t.ravel(), -h.ravel(), -h.ravel()]
        n = idx.size
        hess = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
        return grad, hess


def _minimise(action, inner, tol, max_iter):
    value = action.value(inner)
    dec = np.inf
    for it in range(1, max_iter + 1):
        grad, hess = action.newton_system(inner)
        step = spla.spsolve(hess, -grad.ravel()).reshape(inner.shape)
        dec = float(-np.sum(grad * step))
        if not np.isfinite(dec) or dec < 0:
            raise SolverError("Newton direction is not a descent direction", mismatch=dec, iterations=it)
        if dec <= tol * max(1.0, abs(value)):
            return inner, it, dec
        # damped step: stay inside the monotone cone, Armijo decrease
        alpha = 1.0
        while True:
            trial = inner + alpha * step
            tv = action.value(trial)
            if tv <= value - 0.25 * alpha * dec:
                break
            alpha *= 0.5
            if alpha < 1e-12:
                raise SolverError("line search failed", mismatch=dec, iterations=it)
        inner, value = trial, tv
    raise SolverError(f"no convergence after {max_iter} Newton steps", mismatch=dec, iterations=max_iter)


def solve_characteristics(mu_a, mu_b, time_grid, tol=1e-12, *, quantile_nodes=320,
                          time_nodes=160, points=measures.DEFAULT_POINTS, max_iter=500,
                          closed_form=True):
    """Limit shape between two single-interval measures.

    Parameters
    ----------
    mu_a, mu_b : GridDensity or single-point AtomicMeasure
    time_grid : times at which slices are returned
    tol : relative Newton-decrement tolerance of the action minimisation
    closed_form : route point-mass/point-mass data to the closed form

    Returns
    -------
    LimitShape with ``diagnostics`` holding iterations, the final Newton
    decrement, the Wasserstein-1 mismatch of the terminal slice against
    ``mu_b`` and the continuity-equation residual.
    """
    times = np.asarray(time_grid, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) <= 0):
        raise ValidationError("time grid must be a strictly increasing sequence")
    if times[0] < 0 or times[-1] > 1:
        raise DomainError("time grid must lie in [0, 1]")
    if not tol > 0:
        raise ValidationError("tol must be positive")
    if closed_form and _is_point(mu_a) and _is_point(mu_b):
        flow = SemicircleFlow(float(mu_a.atoms[0]), 0.0, float(mu_b.atoms[0]), 0.0)
        if times[0] <= 0 or times[-1] >= 1:
            raise DomainError("point-mass boundary slices are degenerate; use times in (0, 1)")
        return semicircle_flow_shape(flow, times, points)

    xi = np.linspace(0.0, 1.0, quantile_nodes + 1)
    q = _levels(xi)
    xa, point_a = _boundary_quantiles(mu_a, q)
    xb, point_b = _boundary_quantiles(mu_b, q)
    if (point_a and times[0] == 0.0) or (point_b and times[-1] == 1.0):
        raise DomainError("point-mass boundary slices are degenerate; use times in (0, 1)")

    t = _time_nodes(time_nodes, times)
    spread = measures.quantile_function(measures.semicircle(2.0, points=4097), q)
    lam = 1.0 if (point_a or point_b) else 0.0
    guess = (np.outer(1 - t, xa) + np.outer(t, xb) + lam * np.outer(np.sqrt(t * (1 - t)), spread))[1:-1]
    action = _Action(t, q, xa, xb)
    inner, iters, dec = _minimise(action, guess, tol, max_iter)
    x = action.full(inner)
    _check_topology(x, q, t)

    vel = _time_derivative(x, t)
    sel = np.array([int(np.argmin(np.abs(t - ti))) for ti in times])
    dens, vels, edges, coeffs = [], [], [], []
    for k in sel:
        d, u = _slice(x[k], vel[k], q, points, mu_a if t[k] == 0 else mu_b if t[k] == 1 else None)
        dens.append(d)
        vels.append(u)
        edges.append((x[k, 0], x[k, -1]))
        if 0.0 < t[k] < 1.0:
            coeffs.append((_quantile_edge_fit(x[k], q), _quantile_edge_fit(-x[k, ::-1], 1.0 - q[::-1])))
        else:
            coeffs.append(tuple(_safe_fit(d, side) for side in ("left", "right")))

    mismatch = float(measures.wasserstein1(_row_measure(x[-1], q, points), mu_b)) if not point_b else 0.0
    diag = {
        "method": "lagrangian_newton",
        "iterations": iters,
        "newton_decrement": dec,
        "final_mismatch": mismatch,
        "quantile_nodes": quantile_nodes,
        "time_nodes": int(t.size - 1),
        "continuity_residual": _continuity_residual(x, t, q, sel),
    }
    return LimitShape(times, tuple(dens), tuple(vels), np.array(edges), np.array(coeffs), diag)


def _is_point(mu):
    return isinstance(mu, AtomicMeasure) and np.ptp(mu.atoms) == 0


def _check_topology(x, q, t):
    with np.errstate(divide="ignore"):
        rho = np.diff(q) / np.diff(x, axis=1)
    mid = (q[:-1] > 0.02) & (q[1:] < 0.98)
    interior = rho[1:-1][:, mid]
    ref = np.median(interior, axis=1, keepdims=True)
    if np.any(interior < 1e-3 * ref):
        k = int(np.argmin(np.min(interior / ref, axis=1))) + 1
        raise TopologyError(f"density collapses inside the support near t={t[k]:.3f} (support splitting)")


def _time_derivative(x, t):
    """Second-order finite differences on a non-uniform grid, one-sided at the ends."""
    v = np.empty_like(x)
    h0 = np.diff(t)[:-1][:, None]
    h1 = np.diff(t)[1:][:, None]
    v[1:-1] = (h0**2 * x[2:] - h1**2 * x[:-2] + (h1**2 - h0**2) * x[1:-1]) / (h0 * h1 * (h0 + h1))
    v[0] = _one_sided(x[0], x[1], x[2], t[1] - t[0], t[2] - t[1])
    v[-1] = -_one_sided(x[-1], x[-2], x[-3], t[-1] - t[-2], t[-2] - t[-3])
    return v


def _one_sided(f0, f1, f2, h1, h2):
    # derivative at the first of three points spaced h1, h2
    s = h1 + h2
    return (-(2 * h1 + h2) / (h1 * s)) * f0 + (s / (h1 * h2)) * f1 - (h1 / (h2 * s)) * f2


def _row_measure(xrow, q, points):
    x_mid = 0.5 * (xrow[1:] + xrow[:-1])
    rho_mid = np.diff(q) / np.diff(xrow)
    grid = np.linspace(xrow[0], xrow[-1], points)
    xs = np.concatenate([[xrow[0]], x_mid, [xrow[-1]]])
    rs = np.concatenate([[0.0], rho_mid, [0.0]])
    return GridDensity.normalized(grid, np.interp(grid, xs, rs))


def _slice(xrow, vrow, q, points, boundary):
    if isinstance(boundary, GridDensity):
        grid = boundary.grid
        dens = boundary
    else:
        dens = _row_measure(xrow, q, points)
        grid = dens.grid
    u = np.interp(grid, xrow, vrow)
    return dens, u


def _safe_fit(density, side):
    try:
        return edge_coefficient(density, side).s
    except FitError:
        return math.nan


def _quantile_edge_fit(xrow, q):
    """``s`` from the left end of a quantile row.

    A square-root edge ``rho ~ s sqrt(x - a)/pi`` means
    ``X(q) - a ~ (3 pi q / 2 s)^{2/3}``; fitted over the cells with
    ``rho <= 0.2 max rho``.
    """
    rho = np.diff(q) / np.diff(xrow)
    above = np.nonzero(rho > EDGE_WINDOW * rho.max())[0]
    stop = above[0] + 1 if above.size else q.size
    if stop < 4:
        return math.nan
    qq = q[:stop]
    design = np.column_stack([np.ones_like(qq), qq ** (2.0 / 3.0)])
    c = np.linalg.lstsq(design, xrow[:stop], rcond=None)[0]
    if not c[1] > 0:
        return math.nan
    return float(1.5 * math.pi / c[1] ** 1.5)


def _continuity_residual(x, t, q, rows):
    """Max residual of ``d/dt F_t(x) + rho u = 0`` at the bulk quantiles, relative to ``max |rho u|``.

    Along a quantile path ``F_t(X(q, t)) = q`` identically, so this checks
    that the reconstructed Eulerian fields transport mass consistently.
    """
    vel = _time_derivative(x, t)
    worst = 0.0
    for k in rows:
        if k == 0 or k == t.size - 1:
            continue
        qmid = 0.5 * (q[1:] + q[:-1])
        xmid = 0.5 * (x[k, 1:] + x[k, :-1])
        rho = np.diff(q) / np.diff(x[k])
        u = 0.5 * (vel[k, 1:] + vel[k, :-1])
        bulk = (qmid > 0.05) & (qmid < 0.95)
        # CDF of the neighbouring slices at the same Eulerian point
        f_next = np.interp(xmid[bulk], x[k + 1], q)
        f_prev = np.interp(xmid[bulk], x[k - 1], q)
        dfdt = (f_next - f_prev) / (t[k + 1] - t[k - 1])
        flux = rho[bulk] * u[bulk]
        scale = max(np.max(np.abs(flux)), 1.0)
        worst = max(worst, float(np.max(np.abs(dfdt + flux)) / scale))
    return worst


# ------------------------------------------------------------------ drift

def _g_table(density, velocity):
    """``g = u - H(rho)`` on the slice grid, extended affinely to the 10% window."""
    grid = density.grid
    lo, hi = density.support
    inner = grid[1:-1]
    g_in = np.interp(inner, grid, velocity) - measures.hilbert(density, inner)
    width = hi - lo
    # affine continuation from the last 5% of the support on each side
    band = 0.05 * width
    left = inner < lo + band
    right = inner > hi - band
    pl = np.polyfit(inner[left], g_in[left], 1)
    pr = np.polyfit(inner[right], g_in[right], 1)
    ext_l = np.linspace(lo - G_WINDOW * width, lo, 16)
    ext_r = np.linspace(hi, hi + G_WINDOW * width, 16)
    xs = np.concatenate([ext_l, inner, ext_r])
    gs = np.concatenate([np.polyval(pl, ext_l), g_in, np.polyval(pr, ext_r)])
    return xs, gs


def compute_g(shape, t, x, clamp=False):
    """Mean-field drift ``g_t(x) = u_t(x) - H(rho_t)(x)``.

    Closed-form shapes evaluate the exact affine drift anywhere.  Grid
    shapes interpolate linearly between slices and raise
    :class:`DomainError` outside the support widened by 10% on each side,
    unless ``clamp`` is set (then the nearest window value is used).
    """
    x = np.asarray(x, dtype=float)
    if shape.flow is not None:
        if not (0.0 <= t <= 1.0 and shape.flow.variance(t) > 0):
            raise DomainError(f"t={t} outside the closed-form drift's domain")
        return shape.flow.drift(t, x)
    times = shape.times
    if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
        raise DomainError(f"t={t} outside the shape's time range")
    k = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 2)) if times.size > 1 else 0
    if times.size == 1:
        return _eval_table(shape._g_tables[0], x, clamp)
    theta = (t - times[k]) / (times[k + 1] - times[k])
    theta = min(max(theta, 0.0), 1.0)
    g0 = _eval_table(shape._g_tables[k], x, clamp)
    g1 = _eval_table(shape._g_tables[k + 1], x, clamp)
    return (1.0 - theta) * g0 + theta * g1


def _eval_table(table, x, clamp):
    xs, gs = table
    if not clamp and (np.any(x < xs[0]) or np.any(x > xs[-1])):
        raise DomainError("x outside the drift evaluation window")
    return np.interp(x, xs, gs)


def window(shape, t):
    """Evaluation window ``[lo, hi]`` of :func:`compute_g` at time ``t``."""
    if shape.flow is not None:
        return -math.inf, math.inf
    k = int(np.argmin(np.abs(shape.times - t)))
    xs = shape._g_tables[k][0]
    return float(xs[0]), float(xs[-1])
