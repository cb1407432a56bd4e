"""Particle samplers for nonintersecting Brownian bridges.

Both samplers integrate

    dx_i = dB_i / sqrt(n) + v_i(t, x) dt

by Euler-Maruyama.  In exact mode ``v`` is ``(1/n) grad log p_{1-t}(x, b)``
from the Karlin-McGregor kernel; in mean-field mode it is the pair
repulsion ``(1/n) sum_{j != i} 1/(x_i - x_j)`` plus the limit-shape drift
``g_t(x_i)``.

Steps follow a global schedule shared by all samples.  A sample whose step
exceeds ``n (min gap)^2 / 4`` or would leave the Weyl chamber bisects its
Brownian increment (Brownian-bridge refinement) until the step is
accepted.  All Gaussians are keyed by (seed, sample, step, refinement node),
so a path never depends on which other samples share its batch or worker.
"""
from __future__ import annotations

import csv
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import _integrator
from .errors import (ConditioningError, DomainError, IntegrationError, UsageError,
                     ValidationError)
from .rng import standard_normals

MODES = ("exact", "meanfield", "confluent")
_ALIASES = {"exact-kernel": "exact", "mean-field": "meanfield"}
CHUNK = 250          # samples per work unit; fixed so output never depends on workers
_CLUSTER_STREAM = 1  # refinement of node k uses stream k + 1 >= 2


@dataclass(frozen=True)
class BridgeSpec:
    """One ensemble of ``samples`` independent bridge systems.

    ``b`` is a configuration, or a single number for the confluent end
    ``b_j = c``.  Tied starting particles are released at ``t_start`` from
    their small-time law (a GUE cluster).
    """

    n: int
    a: tuple
    b: tuple | float
    record_times: tuple
    drift_mode: str = "exact"
    dt_max: float = 1e-3
    dt_edge_factor: float = 0.1
    seed: int = 0
    samples: int = 1
    t_start: float = 1e-4

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValidationError("n must be a positive integer")
        mode = _ALIASES.get(self.drift_mode, self.drift_mode)
        if mode not in MODES:
            raise ValidationError(f"unknown drift mode {self.drift_mode!r}")
        object.__setattr__(self, "drift_mode", mode)
        a = np.broadcast_to(np.asarray(self.a, dtype=float), (self.n,))
        if np.any(np.diff(a) < 0) or not np.all(np.isfinite(a)):
            raise ValidationError("a must be a non-decreasing finite configuration")
        object.__setattr__(self, "a", tuple(a.tolist()))
        if np.ndim(self.b) == 0:
            object.__setattr__(self, "b", float(self.b))
        else:
            b = np.asarray(self.b, dtype=float)
            if b.shape != (self.n,) or np.any(np.diff(b) < 0) or not np.all(np.isfinite(b)):
                raise ValidationError("b must be a non-decreasing configuration of n finite points")
            object.__setattr__(self, "b", tuple(b.tolist()))
        rt = np.asarray(self.record_times, dtype=float).ravel()
        if rt.size == 0 or np.any(np.diff(rt) <= 0) or rt[0] < 0 or rt[-1] > 1:
            raise ValidationError("record_times must be strictly increasing inside [0, 1]")
        object.__setattr__(self, "record_times", tuple(rt.tolist()))
        if not self.dt_max > 0:
            raise ValidationError("dt_max must be positive")
        if not 0 < self.dt_edge_factor <= 1:
            raise ValidationError("dt_edge_factor must lie in (0, 1]")
        if int(self.samples) != self.samples or self.samples < 1:
            raise ValidationError("samples must be >= 1")
        if not 0 < self.t_start < 1:
            raise ValidationError("t_start must lie in (0, 1)")

    @property
    def tied_start(self):
        return bool(np.any(np.diff(self.a) == 0))

    @property
    def confluent_end(self):
        return isinstance(self.b, float) or np.ptp(self.b) == 0

    def b_array(self):
        return np.full(self.n, self.b) if isinstance(self.b, float) else np.array(self.b)

    def shifted(self, c):
        b = self.b + c if isinstance(self.b, float) else tuple(np.array(self.b) + c)
        return _replace(self, a=tuple(np.array(self.a) + c), b=b)

    def to_dict(self):
        return asdict(self)


def _replace(spec, **kw):
    d = asdict(spec)
    d.update(kw)
    return BridgeSpec(**d)


_MAGIC = b"NIBPATH1"


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Recorded slices: ``positions[sample, k]`` is the configuration at ``times[k]``."""

    times: np.ndarray
    positions: np.ndarray
    spec: BridgeSpec | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.positions.shape[2]

    @property
    def samples(self):
        return self.positions.shape[0]

    def time_index(self, t, atol=1e-12):
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > atol:
            raise UsageError(f"t={t} was not recorded")
        return k

    def slice(self, t):
        """All samples at a recorded time, shape ``(samples, n)``."""
        return self.positions[:, self.time_index(t)]

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample", "time", "rank", "position"])
            for s in range(self.samples):
                for k, t in enumerate(self.times):
                    for i, x in enumerate(self.positions[s, k]):
                        w.writerow([s, repr(float(t)), i + 1, repr(float(x))])

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        samples = int(data[:, 0].max()) + 1
        times = np.unique(data[:, 1])
        n = int(data[:, 2].max())
        pos = np.empty((samples, times.size, n))
        k = np.searchsorted(times, data[:, 1])
        pos[data[:, 0].astype(int), k, data[:, 2].astype(int) - 1] = data[:, 3]
        return cls(times, pos)

    def to_binary(self, path):
        s, nt, n = self.positions.shape
        with Path(path).open("wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<QQQ", n, nt, s))
            fh.write(np.asarray(self.times, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.positions, dtype="<f8").tobytes())

    @classmethod
    def from_binary(cls, path):
        raw = Path(path).read_bytes()
        if raw[:8] != _MAGIC:
            raise ValidationError(f"{path}: not a path-ensemble file")
        n, nt, s = struct.unpack("<QQQ", raw[8:32])
        times = np.frombuffer(raw, dtype="<f8", count=nt, offset=32).copy()
        pos = np.frombuffer(raw, dtype="<f8", count=s * nt * n, offset=32 + 8 * nt)
        return cls(times, pos.reshape(s, nt, n).copy())


# ------------------------------------------------------------------ drifts

class _Drift(NamedTuple):
    """Arguments describing the velocity field to the compiled kernel."""

    kind: int
    params: np.ndarray = np.zeros(1)
    b: np.ndarray = np.zeros(1)
    times: np.ndarray = np.zeros(1)
    tab_x: np.ndarray = np.zeros(2)
    tab_g: np.ndarray = np.zeros(2)
    offsets: np.ndarray = np.array([0, 2])


def _exact_drift(b):
    return _Drift(_integrator.KIND_EXACT, b=np.ascontiguousarray(b, dtype=float))


def _confluent_drift(c):
    return _Drift(_integrator.KIND_CONFLUENT, params=np.array([float(c)]))


def _meanfield_drift(shape):
    f = shape.flow
    if f is not None:
        return _Drift(_integrator.KIND_FLOW,
                      params=np.array([f.center_a, f.var_a, f.center_b, f.var_b, f.k]))
    tables = shape._g_tables
    offsets = np.concatenate([[0], np.cumsum([xs.size for xs, _ in tables])])
    return _Drift(_integrator.KIND_GRID, times=np.asarray(shape.times, dtype=float),
                  tab_x=np.concatenate([xs for xs, _ in tables]),
                  tab_g=np.concatenate([gs for _, gs in tables]),
                  offsets=offsets.astype(np.int64), params=np.zeros(1))


# ---------------------------------------------------------------- schedule

def _schedule(spec, t0, t_end, pinned):
    """Global step times from ``t0`` to ``t_end`` hitting every record time."""
    marks = [t for t in spec.record_times if t0 < t <= t_end]
    ts = [t0]
    t = t0
    for mark in marks:
        while t < mark:
            dt = spec.dt_max
            if pinned:
                dt = min(dt, spec.dt_edge_factor * (1.0 - t))
            if spec.tied_start:
                dt = min(dt, spec.dt_edge_factor * t)
            # land on the record time; avoid a sliver step just before it
            if t + dt >= mark:
                t = mark
            elif t + 1.5 * dt >= mark:
                t = t + 0.5 * (mark - t)
            else:
                t = t + dt
            ts.append(t)
    return np.array(ts)


# ------------------------------------------------------------- integration

def _gue_cluster(seed, rows, k):
    """Eigenvalues of ``k x k`` GUE matrices (density ~ exp(-tr H^2 / 2)), one per row."""
    z = standard_normals(seed, rows, 0, _CLUSTER_STREAM, 2 * k * k)
    re = z[:, : k * k].reshape(-1, k, k)
    im = z[:, k * k:].reshape(-1, k, k)
    upper = np.triu((re + 1j * im) / math.sqrt(2.0), 1)
    h = upper + np.conj(np.swapaxes(upper, 1, 2))
    idx = np.arange(k)
    h[:, idx, idx] = re[:, idx, idx]
    return np.linalg.eigvalsh(h)


def _initial(spec, rows):
    a = np.array(spec.a)
    x = np.broadcast_to(a, (rows.size, spec.n)).copy()
    if not spec.tied_start:
        return x, 0.0
    t0 = spec.t_start
    scale = math.sqrt(t0 * (1.0 - t0) / spec.n)
    start = 0
    while start < spec.n:
        stop = start
        while stop + 1 < spec.n and a[stop + 1] == a[start]:
            stop += 1
        k = stop - start + 1
        if k > 1:
            x[:, start:stop + 1] = a[start] + scale * _gue_cluster(spec.seed, rows, k)
        start = stop + 1
    return x, t0


def _raise(code, err, spec, rows, drift):
    r, t, h, step, detail = int(err[0]), err[1], err[2], int(err[3]), err[4]
    x = err[5:5 + spec.n].copy()
    info = {"t": float(t), "h": float(h), "sample": int(rows[r]), "step": step, "x": x.tolist()}
    if code == _integrator.ERR_CONDITIONING:
        raise ConditioningError(
            f"Karlin-McGregor matrix ill-conditioned at t={t:.6g} (rcond={detail:.3g})",
            x=x, b=drift.b, t=float(t), rcond=float(detail))
    if code == _integrator.ERR_WINDOW:
        k = int(detail)
        lo = drift.tab_x[drift.offsets[k]]
        hi = drift.tab_x[drift.offsets[k + 1] - 1]
        info["window"] = [float(lo), float(hi)]
        raise IntegrationError(
            f"particles left the drift window by more than 10% of the support at t={t:.6g}", info)
    raise IntegrationError(f"step refinement floor reached at t={t:.6g}", info)


def _run_chunk(spec, rows, drift, pinned, pin_value):
    x, t0 = _initial(spec, rows)
    rec = np.asarray(spec.record_times)
    out = np.empty((rows.size, rec.size, spec.n))
    if spec.tied_start and np.any((rec > 0) & (rec < t0)):
        raise DomainError(f"record times below t_start={t0} are not simulated for tied starts")
    t_end = rec[rec < 1].max(initial=t0) if pinned else rec.max()
    ts = _schedule(spec, t0, t_end, pinned)
    out[:, rec == 0.0] = np.array(spec.a)
    out[:, rec == t0] = x[:, None]
    slot = np.full(ts.size, -1, dtype=np.int64)
    for k, t in enumerate(rec):
        hit = np.flatnonzero(ts[1:] == t)
        if hit.size:
            slot[hit[0] + 1] = k
    counters = np.zeros(2, dtype=np.int64)
    err = np.zeros(5 + spec.n)
    code = _integrator.integrate(
        np.ascontiguousarray(x), rows.astype(np.int64), np.uint64(spec.seed % 2**64), ts, slot, out,
        drift.kind, drift.params, drift.b, drift.times, drift.tab_x, drift.tab_g,
        drift.offsets, counters, err)
    if code != _integrator.OK:
        _raise(code, err, spec, rows, drift)
    if pinned:
        for k, t in enumerate(rec):
            if t == 1.0:
                out[:, k] = pin_value
    return out, {"steps": int(ts.size - 1), "refinements": int(counters[0]),
                 "reflections": int(counters[1])}


def _run(spec, drift, pinned, pin_value, workers):
    rows = np.arange(spec.samples, dtype=np.uint64)
    chunks = [rows[i:i + CHUNK] for i in range(0, rows.size, CHUNK)]
    job = lambda r: _run_chunk(spec, r, drift, pinned, pin_value)
    if workers and workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, chunks))
    else:
        results = [job(c) for c in chunks]
    positions = np.concatenate([r[0] for r in results])
    diag = {"steps": results[0][1]["steps"],
            "refinements": int(sum(r[1]["refinements"] for r in results)),
            "reflections": int(sum(r[1]["reflections"] for r in results))}
    return PathEnsemble(np.asarray(spec.record_times), positions, spec, diag)


def simulate_bridge(spec, workers=1):
    """Exact-kernel (or confluent) bridge sampler.

    Raises :class:`ConditioningError` as soon as the kernel matrix becomes
    numerically singular: the drift at the current state is needed, and no
    step refinement can change it.
    """
    if spec.drift_mode == "meanfield":
        raise UsageError("mean-field mode needs a limit shape; use simulate_meanfield")
    b = spec.b_array()
    if spec.confluent_end:
        drift = _confluent_drift(b[0])
    elif spec.drift_mode == "confluent":
        raise ValidationError("confluent mode needs b_j equal for all j")
    elif np.any(np.diff(b) <= 0):
        raise ValidationError("exact mode needs strictly increasing b or a fully confluent end")
    else:
        drift = _exact_drift(b)
    return _run(spec, drift, True, b, workers)


def simulate_meanfield(spec, shape, workers=1):
    """Mean-field sampler driven by the limit-shape drift ``g_t`` of ``shape``."""
    rec = np.asarray(spec.record_times)
    pinned = shape.pinned_end
    if shape.flow is None:
        start = spec.t_start if spec.tied_start else 0.0
        if shape.times[0] > start + 1e-12 or shape.times[-1] < rec.max() - 1e-12:
            raise ValidationError(f"shape must cover [{start}, {rec.max()}]")
    pin = np.full(spec.n, shape.flow.center_b) if pinned else None
    return _run(spec, _meanfield_drift(shape), pinned, pin, workers)


# ------------------------------------------------------------------ duality

def dual_transform(times, values, direction, out_times=None):
    """Bridge ``W`` on ``[0, 1)`` <-> motion ``B`` on ``[0, inf)``, ``W(t) = (1-t) B(t/(1-t))``.

    Returns ``(new_times, new_values)``.  With ``out_times`` the result is
    linearly interpolated onto that grid (in the new time variable).
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if direction == "bridge->motion":
        if np.any(t >= 1) or np.any(t < 0):
            raise DomainError("bridge times must lie in [0, 1)")
        new_t = t / (1.0 - t)
        new_v = v / (1.0 - t)
    elif direction == "motion->bridge":
        if np.any(t < 0) or not np.all(np.isfinite(t)):
            raise DomainError("motion times must be finite and >= 0")
        new_t = t / (1.0 + t)
        new_v = v / (1.0 + t)
    else:
        raise ValidationError("direction must be 'bridge->motion' or 'motion->bridge'")
    if out_times is None:
        return new_t, new_v
    out = np.asarray(out_times, dtype=float)
    return out, np.interp(out, new_t, new_v)


# ----------------------------------------------------------- Calogero-Moser

def cm_energy(x, v):
    n = x.size
    d = x[:, None] - x[None, :]
    np.fill_diagonal(d, np.inf)
    return 0.5 * float(np.sum(v * v)) - float(np.sum(d**-2.0)) / (2.0 * n * n)


@dataclass(frozen=True, eq=False)
class CMState:
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if x.shape != v.shape or x.ndim != 1:
            raise ValidationError("x and v must be vectors of equal length")
        if np.any(np.diff(x) <= 0):
            raise ValidationError("x must be strictly increasing")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    @property
    def energy(self):
        return cm_energy(self.x, self.v)


class CMTrajectory(NamedTuple):
    times: np.ndarray
    x: np.ndarray
    v: np.ndarray
    energy: np.ndarray

    def final(self):
        return CMState(self.x[-1], self.v[-1])


def _cm_force(x):
    n = x.size
    d = x[:, None] - x[None, :]
    np.fill_diagonal(d, np.inf)
    return -2.0 / (n * n) * np.sum(d**-3.0, axis=1)


def cm_integrate(initial, t_end, dt):
    """RK4 for ``H = 1/2 sum v^2 - (1/2n^2) sum_{i != j} (x_i - x_j)^{-2}``.

    The last step is shortened to land on ``t_end``.
    """
    if not dt > 0 or not t_end >= 0:
        raise ValidationError("need dt > 0 and t_end >= 0")
    steps = int(math.ceil(t_end / dt - 1e-9))
    x, v = initial.x.copy(), initial.v.copy()
    times = np.empty(steps + 1)
    xs = np.empty((steps + 1, x.size))
    vs = np.empty_like(xs)
    en = np.empty(steps + 1)
    times[0], xs[0], vs[0], en[0] = 0.0, x, v, cm_energy(x, v)
    t = 0.0
    for k in range(1, steps + 1):
        h = min(dt, t_end - t)
        k1x, k1v = v, _cm_force(x)
        k2x, k2v = v + 0.5 * h * k1v, _cm_force(x + 0.5 * h * k1x)
        k3x, k3v = v + 0.5 * h * k2v, _cm_force(x + 0.5 * h * k2x)
        k4x, k4v = v + h * k3v, _cm_force(x + h * k3x)
        x = x + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        t = k * dt if k < steps else t_end
        if x.size > 1 and np.min(np.diff(x)) < 1e-9:
            raise IntegrationError(f"particle collision at t={t:.6g}", {"t": t, "x": x.tolist()})
        times[k], xs[k], vs[k], en[k] = t, x, v, cm_energy(x, v)
    return CMTrajectory(times, xs, vs, en)

