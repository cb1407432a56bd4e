"""Ensemble statistics: rigidity, Stieltjes deviations, edge fluctuations, dominance."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import measures
from .errors import UsageError


@dataclass(frozen=True, eq=False)
class RigidityReport:
    t: float
    n: int
    samples: int
    median_dev: np.ndarray
    p95_dev: np.ndarray
    edge_excess: np.ndarray
    bulk_median: float

    def to_dict(self):
        return {
            "t": self.t, "n": self.n, "samples": self.samples,
            "bulk_median": self.bulk_median,
            "median_dev": self.median_dev.tolist(),
            "p95_dev": self.p95_dev.tolist(),
            "edge_excess": self.edge_excess.tolist(),
        }

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))


def _bulk_ranks(n):
    lo = max(n // 4, 1)
    hi = max((3 * n) // 4, lo)
    return np.arange(lo - 1, hi)


def rigidity_report(ensemble, shape, t):
    """Deviations ``|x_i(t) - gamma_i(t)|`` from the classical locations of ``shape``."""
    x = ensemble.slice(t)
    n = x.shape[1]
    gamma = measures.quantiles(shape.density_at(t), n)
    dev = np.abs(x - gamma)
    a, _ = shape.edge_at(t, "left")
    b, _ = shape.edge_at(t, "right")
    excess = np.maximum(np.maximum(a - x[:, 0], x[:, -1] - b), 0.0)
    bulk = dev[:, _bulk_ranks(n)]
    return RigidityReport(float(t), n, x.shape[0], np.median(dev, axis=0),
                          np.percentile(dev, 95, axis=0), excess, float(np.median(bulk)))


def stieltjes_domain_ok(z, edges, m_value, n):
    """Whether ``z`` lies where the empirical Stieltjes transform is controlled."""
    if not z.imag > 0:
        return False
    a, b = edges
    dist = abs(z - min(max(z.real, a), b))
    threshold = math.log(n) ** 2 / n
    return min(dist * abs(m_value.imag), z.imag) >= threshold


def stieltjes_compare(ensemble, shape, t, z_list):
    """Per ``z``: median and max over samples of ``|m_emp(z) - m(z)|``.

    Points outside the controlled domain are returned with ``valid`` False
    and are not evaluated.
    """
    x = ensemble.slice(t)
    n = x.shape[1]
    dens = shape.density_at(t)
    edges = dens.support
    out = []
    for z in np.atleast_1d(np.asarray(z_list, dtype=complex)):
        z = complex(z)
        if not z.imag > 0:
            out.append({"z": [z.real, z.imag], "valid": False})
            continue
        m = measures.stieltjes(dens, z)
        if not stieltjes_domain_ok(z, edges, m, n):
            out.append({"z": [z.real, z.imag], "valid": False})
            continue
        emp = np.mean(1.0 / (z - x), axis=1)
        dev = np.abs(emp - m)
        out.append({"z": [z.real, z.imag], "valid": True,
                    "median": float(np.median(dev)), "max": float(np.max(dev))})
    return out


@dataclass(frozen=True, eq=False)
class EdgeSampleSet:
    """Rescaled extreme particle; converges in law to TW2 with this sign convention."""

    t: float
    side: str
    eta: np.ndarray
    edge: float
    s: float
    n: int
    convention: str = field(default="")

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eta"])
            for v in self.eta:
                w.writerow([repr(float(v))])

    def scaling(self):
        return {"edge": self.edge, "s": self.s, "n": self.n, "side": self.side,
                "convention": self.convention}


def edge_statistics(ensemble, shape, t, side):
    if side not in ("left", "right"):
        raise UsageError("side must be 'left' or 'right'")
    x = ensemble.slice(t)
    edge, s = shape.edge_at(t, side)
    if not (math.isfinite(edge) and math.isfinite(s) and s > 0):
        raise UsageError(f"shape has no edge fit on the {side} at t={t}")
    n = x.shape[1]
    scale = (s * n) ** (2.0 / 3.0)
    if side == "right":
        eta = scale * (x[:, -1] - edge)
        conv = "eta = (s n)^(2/3) (x_n - b)"
    else:
        eta = scale * (edge - x[:, 0])
        conv = "eta = (s n)^(2/3) (a - x_1)"
    return EdgeSampleSet(float(t), side, eta, float(edge), float(s), n, conv)


def ks_distance(samples, cdf):
    """Two-sided Kolmogorov-Smirnov statistic against a table or a callable CDF."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    m = x.size
    if m == 0:
        raise UsageError("no samples")
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, m + 1)
    return float(max(np.max(i / m - f), np.max(f - (i - 1) / m)))


def dkw_band(m, alpha=0.01):
    """Dvoretzky-Kiefer-Wolfowitz band for one empirical CDF of ``m`` samples."""
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * m))


def ks_band(m1, m2, alpha=0.01):
    """Two-sample Kolmogorov-Smirnov band (asymptotic, DKW-type constant)."""
    return math.sqrt(math.log(2.0 / alpha) / 2.0) * math.sqrt((m1 + m2) / (m1 * m2))


@dataclass(frozen=True)
class DominanceResult:
    t: float
    band: float
    max_excess: tuple
    violations: tuple

    @property
    def passed(self):
        return not self.violations

    def to_dict(self):
        return {"t": self.t, "band": self.band, "max_excess": list(self.max_excess),
                "violations": [list(v) for v in self.violations]}


def dominance_test(ensemble_hi, ensemble_lo, t, alpha=0.01, band="dkw"):
    """Check ``F_hi,i <= F_lo,i + band`` rank by rank at time ``t``.

    ``band`` is ``"dkw"`` (DKW width for the smaller ensemble) or
    ``"two-sample"`` (the wider two-sample KS width).  A violation is recorded as ``(rank, x, excess)`` where the empirical
    CDF of the upper ensemble exceeds that of the lower one by more than
    the band.
    """
    hi = ensemble_hi.slice(t)
    lo = ensemble_lo.slice(t)
    if hi.shape[1] != lo.shape[1]:
        raise UsageError("ensembles have different particle counts")
    if band == "dkw":
        width = dkw_band(min(hi.shape[0], lo.shape[0]), alpha)
    elif band == "two-sample":
        width = ks_band(hi.shape[0], lo.shape[0], alpha)
    else:
        raise UsageError("band must be 'dkw' or 'two-sample'")
    excess, violations = [], []
    for i in range(hi.shape[1]):
        a = np.sort(hi[:, i])
        b = np.sort(lo[:, i])
        pts = np.concatenate([a, b])
        diff = (np.searchsorted(a, pts, side="right") / a.size
                - np.searchsorted(b, pts, side="right") / b.size)
        j = int(np.argmax(diff))
        excess.append(float(diff[j]))
        if diff[j] > width:
            violations.append((i + 1, float(pts[j]), float(diff[j])))
    return DominanceResult(float(t), width, tuple(excess), tuple(violations))

