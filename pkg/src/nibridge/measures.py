"""Probability measures on the line.

Two concrete representations are used throughout:

* :class:`AtomicMeasure` -- ``n`` atoms of mass ``1/n`` (particle
  configurations, boundary data);
* :class:`GridDensity` -- a piecewise-linear density on a grid, integrated
  with the trapezoid rule.

The transforms below are exact for the piecewise-linear interpolant, so
their only error is the interpolation error of the grid.
"""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import DomainError, ValidationError

NORMALIZATION_TOL = 1e-8
DEFAULT_POINTS = 2048


@dataclass(frozen=True)
class AtomicMeasure:
    """Equal-mass atoms, stored sorted."""

    atoms: np.ndarray

    def __post_init__(self):
        a = np.sort(np.asarray(self.atoms, dtype=float).ravel())
        if a.size == 0:
            raise ValidationError("an atomic measure needs at least one atom")
        if not np.all(np.isfinite(a)):
            raise ValidationError("atoms must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "atoms", a)

    @property
    def n(self):
        return self.atoms.size

    @property
    def support(self):
        return float(self.atoms[0]), float(self.atoms[-1])

    def cdf(self, x):
        return np.searchsorted(self.atoms, x, side="right") / self.n

    def mean(self):
        return float(self.atoms.mean())

    def shifted(self, c):
        return AtomicMeasure(self.atoms + c)


@dataclass(frozen=True)
class GridDensity:
    """Normalised piecewise-linear density supported on ``[grid[0], grid[-1]]``."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float).ravel().copy()
        v = np.asarray(self.values, dtype=float).ravel().copy()
        if g.size < 2 or g.size != v.size:
            raise ValidationError("grid and values must have equal length >= 2")
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(v))):
            raise ValidationError("grid and values must be finite")
        if np.any(np.diff(g) <= 0):
            raise ValidationError("grid must be strictly increasing")
        if np.any(v < 0):
            raise ValidationError("density values must be non-negative")
        mass = np.trapezoid(v, g)
        if abs(mass - 1.0) > NORMALIZATION_TOL:
            raise ValidationError(f"density integrates to {mass!r}, not 1")
        g.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    @classmethod
    def normalized(cls, grid, values):
        """Build from possibly unnormalised values (rescaled to unit mass)."""
        g = np.asarray(grid, dtype=float)
        v = np.asarray(values, dtype=float)
        mass = np.trapezoid(v, g)
        if not mass > 0:
            raise ValidationError("density has no mass")
        return cls(g, v / mass)

    @property
    def support(self):
        return float(self.grid[0]), float(self.grid[-1])

    def __call__(self, x):
        return np.interp(x, self.grid, self.values, left=0.0, right=0.0)

    def cell_cdf(self):
        """CDF at the grid nodes."""
        g, v = self.grid, self.values
        c = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(g))])
        return c

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        g, v = self.grid, self.values
        c = self.cell_cdf()
        k = np.clip(np.searchsorted(g, x, side="right") - 1, 0, g.size - 2)
        d = np.clip(x - g[k], 0.0, g[k + 1] - g[k])
        slope = (v[k + 1] - v[k]) / (g[k + 1] - g[k])
        out = c[k] + v[k] * d + 0.5 * slope * d * d
        out = np.where(x < g[0], 0.0, out)
        return np.where(x >= g[-1], 1.0, out)

    def mean(self):
        g, v = self.grid, self.values
        # exact first moment of the piecewise-linear interpolant
        h = np.diff(g)
        return float(np.sum(h * (v[:-1] * (2 * g[:-1] + g[1:]) + v[1:] * (g[:-1] + 2 * g[1:])) / 6.0))

    def shifted(self, c):
        return GridDensity(self.grid + c, self.values)


Measure1D = Union[AtomicMeasure, GridDensity]


def weyl_point(coords, strict=True):
    """Validate a configuration in the (closed, if ``strict=False``) Weyl chamber."""
    x = np.asarray(coords, dtype=float).ravel()
    if x.size == 0:
        raise ValidationError("configuration is empty")
    if not np.all(np.isfinite(x)):
        raise ValidationError("configuration must be finite")
    d = np.diff(x)
    if strict and np.any(d <= 0):
        raise ValidationError("coordinates must be strictly increasing")
    if not strict and np.any(d < 0):
        raise ValidationError("coordinates must be non-decreasing")
    return x


# ---------------------------------------------------------------- builders

def semicircle(radius=2.0, center=0.0, points=DEFAULT_POINTS):
    """Wigner semicircle of the given radius sampled on ``points`` nodes."""
    if not radius > 0:
        raise ValidationError("radius must be positive")
    x = np.linspace(-radius, radius, points)
    v = 2.0 / (math.pi * radius**2) * np.sqrt(np.clip(radius**2 - x * x, 0.0, None))
    v[0] = v[-1] = 0.0
    return GridDensity.normalized(x + center, v)


def uniform(lo=0.0, hi=1.0, points=DEFAULT_POINTS):
    if not hi > lo:
        raise ValidationError("uniform needs lo < hi")
    x = np.linspace(lo, hi, points)
    return GridDensity(x, np.full(points, 1.0 / (hi - lo)))


def point(c=0.0):
    return AtomicMeasure(np.array([float(c)]))


_NAMED = re.compile(r"^\s*(semicircle|uniform|point)\s*\(([^)]*)\)\s*$")


def named(spec, points=DEFAULT_POINTS):
    """Parse ``"semicircle(r)"``, ``"uniform(lo,hi)"`` or ``"point(c)"``."""
    m = _NAMED.match(spec)
    if not m:
        raise ValidationError(f"unknown measure {spec!r}")
    kind = m.group(1)
    args = [float(a) for a in m.group(2).split(",") if a.strip()]
    try:
        if kind == "semicircle":
            return semicircle(*args, points=points)
        if kind == "uniform":
            return uniform(*args, points=points)
        return point(*args)
    except TypeError as exc:
        raise ValidationError(f"bad arguments in {spec!r}") from exc


def load_density_csv(path, normalize=True):
    """Two-column CSV ``abscissa,density``; a header row is allowed."""
    data = _read_numeric_csv(path, 2)
    x, v = data[:, 0], data[:, 1]
    nz = np.nonzero(v > 0)[0]
    if nz.size == 0:
        raise ValidationError(f"{path}: density is identically zero")
    lo, hi = max(nz[0] - 1, 0), min(nz[-1] + 1, v.size - 1)
    x, v = x[lo:hi + 1], v[lo:hi + 1]
    return GridDensity.normalized(x, v) if normalize else GridDensity(x, v)


def load_atomic_csv(path):
    """One-column CSV of atom positions."""
    return AtomicMeasure(_read_numeric_csv(path, 1)[:, 0])


def _read_numeric_csv(path, ncols):
    rows = []
    with Path(path).open(newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(c) for c in row[:ncols]])
            except ValueError:
                if rows:
                    raise ValidationError(f"{path}: non-numeric row {row!r}")
                continue  # header
            if len(rows[-1]) != ncols:
                raise ValidationError(f"{path}: expected {ncols} columns")
    if not rows:
        raise ValidationError(f"{path}: no data")
    return np.array(rows)


# -------------------------------------------------------------- transforms

def quantiles(measure, n):
    """Midpoint quantiles ``gamma_i`` with ``F(gamma_i) = (i - 1/2)/n``."""
    n = int(n)
    if n < 1:
        raise ValidationError("n must be >= 1")
    levels = (np.arange(1, n + 1) - 0.5) / n
    return quantile_function(measure, levels)


def quantile_function(measure, levels):
    """Generalised inverse CDF at the given levels in ``[0, 1]``."""
    levels = np.asarray(levels, dtype=float)
    if isinstance(measure, AtomicMeasure):
        idx = np.clip(np.ceil(levels * measure.n).astype(int) - 1, 0, measure.n - 1)
        return measure.atoms[idx]
    g, v = measure.grid, measure.values
    c = measure.cell_cdf()
    c = c / c[-1]
    k = np.clip(np.searchsorted(c, levels, side="left") - 1, 0, g.size - 2)
    h = g[k + 1] - g[k]
    slope = (v[k + 1] - v[k]) / h
    r = levels - c[k]
    # solve v_k d + slope d^2 / 2 = r on [0, h], in a cancellation-free form
    disc = np.sqrt(np.maximum(v[k] ** 2 + 2.0 * slope * r, 0.0))
    denom = v[k] + disc
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(denom > 0, 2.0 * r / denom, 0.0)
    return g[k] + np.clip(d, 0.0, h)


def discretize(density, n):
    """Quantile configuration of ``n`` particles for the given boundary measure."""
    n = int(n)
    if n < 1:
        raise ValidationError("n must be >= 1")
    if isinstance(density, AtomicMeasure) and density.n != n:
        if density.n != 1:
            raise ValidationError("can only rediscretise a single atom")
        return np.full(n, density.atoms[0])
    return weyl_point(quantiles(density, n), strict=False)


def stieltjes(measure, z):
    """``int dmu(x) / (z - x)`` for ``z`` off the support (array-valued ``z`` ok)."""
    z = np.asarray(z, dtype=complex)
    lo, hi = measure.support
    on_support = (z.imag == 0) & (z.real >= lo) & (z.real <= hi)
    if np.any(on_support):
        raise DomainError("z lies on the real axis inside the support")
    if isinstance(measure, AtomicMeasure):
        out = np.mean(1.0 / (z[..., None] - measure.atoms), axis=-1)
    else:
        g, v = measure.grid, measure.values
        h = np.diff(g)
        beta = np.diff(v) / h
        zz = z[..., None]
        # exact integral of (v_k + beta_k (y - g_k)) / (z - y) over each cell
        a = v[:-1] + beta * (zz - g[:-1])
        logs = np.log(zz - g[:-1]) - np.log(zz - g[1:])
        out = np.sum(a * logs - beta * h, axis=-1)
    return out if out.ndim else complex(out)


def hilbert(density, x):
    """Principal value ``PV int rho(y) / (x - y) dy`` strictly inside the support."""
    x = np.asarray(x, dtype=float)
    lo, hi = density.support
    if np.any(x <= lo) or np.any(x >= hi):
        raise DomainError("hilbert transform needs x strictly inside the support")
    g, v = density.grid, density.values
    h = np.diff(g)
    beta = np.diff(v) / h
    xx = x[..., None]
    rho_x = density(x)
    # C_k = (linear extension of cell k at x) - rho(x); vanishes on x's own cell
    c = v[:-1] + beta * (xx - g[:-1]) - rho_x[..., None]
    left = np.abs(xx - g[:-1])
    right = np.abs(xx - g[1:])
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.log(left) - np.log(right)
        # on the two cells meeting at a node x, c vanishes; drop rounding residue
        term = np.where((c == 0.0) | (left == 0.0) | (right == 0.0), 0.0, c * logs)
    out = np.sum(term, axis=-1) - np.sum(beta * h) + rho_x * np.log((x - lo) / (hi - x))
    return out if out.ndim else float(out)


def wasserstein1(mu, nu):
    """``int |F_mu - F_nu| dx`` over the merged breakpoints of both CDFs."""
    pts = np.union1d(_breakpoints(mu), _breakpoints(nu))
    if pts.size < 2:
        return 0.0
    # Gauss-Legendre on each interval; exact where both CDFs are polynomial
    node, weight = np.polynomial.legendre.leggauss(6)
    a, b = pts[:-1], pts[1:]
    xs = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * node
    diff = np.abs(mu.cdf(xs) - nu.cdf(xs))
    return float(np.sum(0.5 * (b - a) * (diff @ weight)))


def _breakpoints(m):
    return m.atoms if isinstance(m, AtomicMeasure) else m.grid


def empirical(x):
    """Atomic measure of a configuration (last axis) -- convenience wrapper."""
    return AtomicMeasure(np.asarray(x, dtype=float).ravel())
