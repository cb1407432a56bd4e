"""Airy function and the Tracy-Widom GUE distribution.

Ai is evaluated from Taylor expansions about a ladder of anchor points
(the anchor at 0 is the Maclaurin series) and from the classical asymptotic
expansions for ``|x| > 8``.  Taylor coefficients come from the defining ODE
``Ai'' = x Ai``.  F2 is the Fredholm determinant ``det(I - K_Ai)`` on
``L^2(s, inf)``, discretised by Nystrom's method.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import simpson

from .errors import DomainError, OracleError

AI0 = 3.0 ** (-2.0 / 3.0) / math.gamma(2.0 / 3.0)
AIP0 = -(3.0 ** (-1.0 / 3.0)) / math.gamma(1.0 / 3.0)

_ASYMPTOTIC_FROM = 8.0
_ANCHOR_STEP = 0.5
_TAYLOR_TERMS = 32
_ASYM_TERMS = 28


def _taylor_step(x0, y0, d0, h, terms=_TAYLOR_TERMS):
    """Ai, Ai' at ``x0 + h`` from values at ``x0`` (arrays broadcast)."""
    x0, y0, d0, h = np.broadcast_arrays(*map(np.asarray, (x0, y0, d0, h)))
    c_prev = np.zeros_like(y0, dtype=float)  # c_{k-1}
    c_k = y0.astype(float)
    c_next = d0.astype(float)
    val = c_k + c_next * h
    der = c_next.copy()
    hk = np.ones_like(val)
    cs = [c_k, c_next]
    for k in range(0, terms):
        # (k+2)(k+1) c_{k+2} = x0 c_k + c_{k-1}
        cm1 = cs[k - 1] if k >= 1 else c_prev
        c2 = (x0 * cs[k] + cm1) / ((k + 2) * (k + 1))
        cs.append(c2)
        hk = hk * h
        der = der + (k + 2) * c2 * hk
        val = val + c2 * hk * h
    return val, der


def _asym_coeffs(m):
    u = [1.0]
    for k in range(1, m):
        prod = 1.0
        for j in range(2 * k + 1, 6 * k, 2):
            prod *= j
        u.append(prod / (216.0**k * math.factorial(k)))
    u = np.array(u)
    v = np.array([1.0] + [-(6 * k + 1) / (6 * k - 1) * u[k] for k in range(1, m)])
    return u, v


_U, _V = _asym_coeffs(_ASYM_TERMS)


def _asym_positive(x):
    zeta = 2.0 / 3.0 * x**1.5
    sign = (-1.0) ** np.arange(_ASYM_TERMS)
    powers = zeta[..., None] ** (-np.arange(_ASYM_TERMS))
    su = (sign * _U * powers).sum(-1)
    sv = (sign * _V * powers).sum(-1)
    pre = np.exp(-zeta) / (2.0 * math.sqrt(math.pi))
    return pre * su / x**0.25, -pre * sv * x**0.25


def _asym_negative(x):
    y = -x
    zeta = 2.0 / 3.0 * y**1.5
    half = _ASYM_TERMS // 2
    k = np.arange(half)
    alt = (-1.0) ** k
    ze = zeta[..., None] ** (-2.0 * k)
    zo = zeta[..., None] ** (-2.0 * k - 1)
    u_even = (alt * _U[0::2][:half] * ze).sum(-1)
    u_odd = (alt * _U[1::2][:half] * zo).sum(-1)
    v_even = (alt * _V[0::2][:half] * ze).sum(-1)
    v_odd = (alt * _V[1::2][:half] * zo).sum(-1)
    phase = zeta - math.pi / 4.0
    c, s = np.cos(phase), np.sin(phase)
    ai = (c * u_even + s * u_odd) / (math.sqrt(math.pi) * y**0.25)
    aip = y**0.25 * (s * v_even - c * v_odd) / math.sqrt(math.pi)
    return ai, aip


def _build_anchors():
    n_side = int(round(_ASYMPTOTIC_FROM / _ANCHOR_STEP))
    xs = np.arange(-n_side, n_side + 1) * _ANCHOR_STEP
    ai = np.empty_like(xs)
    aip = np.empty_like(xs)
    mid = n_side
    ai[mid], aip[mid] = AI0, AIP0
    # leftwards from 0: oscillatory side, neutrally stable
    for i in range(mid - 1, -1, -1):
        ai[i], aip[i] = _taylor_step(xs[i + 1], ai[i + 1], aip[i + 1], -_ANCHOR_STEP)
    # rightwards Ai is recessive: start from the asymptotic value and march
    # back towards 0 where errors in the Bi direction decay
    ai[-1], aip[-1] = _asym_positive(np.array(xs[-1]))
    for i in range(len(xs) - 2, mid, -1):
        ai[i], aip[i] = _taylor_step(xs[i + 1], ai[i + 1], aip[i + 1], -_ANCHOR_STEP)
    return xs, ai, aip


_ANCHOR_X, _ANCHOR_AI, _ANCHOR_AIP = _build_anchors()


def airy_pair(x):
    """Vectorised ``(Ai(x), Ai'(x))`` for any real ``x``.

    No range check; far in the right tail the values underflow to 0.
    """
    x = np.asarray(x, dtype=float)
    ai = np.empty_like(x)
    aip = np.empty_like(x)
    right = x > _ASYMPTOTIC_FROM
    left = x < -_ASYMPTOTIC_FROM
    mid = ~(right | left)
    if right.any():
        ai[right], aip[right] = _asym_positive(x[right])
    if left.any():
        ai[left], aip[left] = _asym_negative(x[left])
    if mid.any():
        xm = x[mid]
        idx = np.rint((xm - _ANCHOR_X[0]) / _ANCHOR_STEP).astype(int)
        x0 = _ANCHOR_X[idx]
        ai[mid], aip[mid] = _taylor_step(x0, _ANCHOR_AI[idx], _ANCHOR_AIP[idx], xm - x0)
    return ai, aip


def airy_ai(x):
    """Airy function Ai on ``|x| <= 50``; absolute error below 1e-12."""
    xa = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xa)) or np.any(np.abs(xa) > 50.0):
        raise DomainError("airy_ai is defined here for |x| <= 50")
    ai, _ = airy_pair(xa)
    return float(ai) if ai.ndim == 0 else ai


def airy_kernel(x, y):
    """Airy kernel K(x, y) with its diagonal limit ``Ai'(x)^2 - x Ai(x)^2``."""
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    ax, dx = airy_pair(x)
    ay, dy = airy_pair(y)
    diff = x - y
    same = diff == 0.0
    out = np.empty_like(x)
    off = ~same
    out[off] = (ax[off] * dy[off] - dx[off] * ay[off]) / diff[off]
    out[same] = dx[same] ** 2 - x[same] * ax[same] ** 2
    return out


# x = s + exp(u) - exp(LOG_LO): starts exactly at s, so no mass near the edge is cut
LOG_LO, LOG_HI = -8.0, 4.0


def _nystrom_f2(s, nodes):
    u, w = np.polynomial.legendre.leggauss(nodes)
    u = LOG_LO + (u + 1.0) * (LOG_HI - LOG_LO) / 2.0
    e = np.exp(u)
    d = e - math.exp(LOG_LO)
    w = w * (LOG_HI - LOG_LO) / 2.0 * e
    x = s + d
    ai, aip = airy_pair(x)
    num = np.outer(ai, aip) - np.outer(aip, ai)
    # differences of offsets, not of x: nodes crowd at s and would cancel
    den = d[:, None] - d[None, :]
    np.fill_diagonal(den, 1.0)
    k = num / den
    np.fill_diagonal(k, aip**2 - x * ai**2)
    sw = np.sqrt(w)
    a = sw[:, None] * k * sw[None, :]
    return float(np.linalg.det(np.eye(nodes) - a))


def tw2_cdf(s, quad_nodes=64, check=True):
    """Tracy-Widom GUE distribution function F2(s).

    With ``check`` the value is recomputed with twice the nodes and an
    :class:`OracleError` is raised if the two disagree by more than 1e-6.
    """
    s = float(s)
    if not math.isfinite(s):
        raise DomainError("s must be finite")
    f = _nystrom_f2(s, quad_nodes)
    if check:
        f2 = _nystrom_f2(s, 2 * quad_nodes)
        if abs(f - f2) > 1e-6:
            raise OracleError(f"F2({s}) not converged: {f} vs {f2} at {2 * quad_nodes} nodes")
    return min(max(f, 0.0), 1.0)


@dataclass(frozen=True)
class TWTable:
    """Tabulated F2 on an increasing grid."""

    s_grid: np.ndarray
    cdf: np.ndarray

    @classmethod
    def build(cls, lo=-10.0, hi=6.0, step=0.02, quad_nodes=64, check=True):
        s = np.round(np.arange(lo, hi + step / 2, step), 12)
        cdf = np.array([tw2_cdf(v, quad_nodes, check=check) for v in s])
        # Nystrom values can wobble at the 1e-16 level in the flat tails
        cdf = np.maximum.accumulate(cdf)
        return cls(s, cdf)

    def __call__(self, s):
        return np.interp(s, self.s_grid, self.cdf, left=self.cdf[0], right=self.cdf[-1])

    def moments(self):
        """Mean and variance from the tabulated CDF (Simpson's rule)."""
        s, f = self.s_grid, self.cdf
        lo, hi = s[0], s[-1]
        # E X = hi - int F ds (mass below lo is < 1e-6 and neglected)
        mean = hi - simpson(f, x=s) + lo * f[0]
        second = hi**2 - 2.0 * simpson(s * f, x=s) + lo**2 * f[0]
        return float(mean), float(second - mean**2)

    def mean(self):
        return self.moments()[0]

    def variance(self):
        return self.moments()[1]

    def quantile(self, p):
        """Inverse CDF by linear interpolation on the strictly increasing part."""
        keep = np.concatenate([[True], np.diff(self.cdf) > 0])
        return np.interp(p, self.cdf[keep], self.s_grid[keep])

    def sample(self, size, rng):
        return self.quantile(rng.uniform(size=size))

    def to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "F2"])
            for s, f in zip(self.s_grid, self.cdf):
                w.writerow([repr(float(s)), repr(float(f))])

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1])


_DEFAULT_TABLE = None


def default_table():
    """The default ``[-10, 6]`` table, built once per process."""
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = TWTable.build()
    return _DEFAULT_TABLE
