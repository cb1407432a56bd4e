"""Karlin-McGregor transition density of nonintersecting Brownian motions.

``p_t(x, y) = det[ sqrt(n/2 pi t) exp(-n (x_i - y_j)^2 / 2t) ]`` for
configurations ``x, y`` in the Weyl chamber, where ``n`` (``n_scale``) sets
the diffusivity ``1/n`` of each path.

Everything is evaluated in the log domain: each row is divided by its
largest entry before an LU factorisation with partial pivoting.  The drift
``d/dx_i log p_tau(x, b)`` only involves the row-scaled matrix ``M``:

    drift = (n / tau) * (diag(M B M^{-1}) - x),   B = diag(b),

so one factorisation plus ``n`` triangular solves gives the full gradient.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import ConditioningError, DomainError, ValidationError

RCOND_MIN = 1e-14


class KernelEval(NamedTuple):
    log_density: float
    sign: int


def _exponents(x, y, t, n_scale):
    return -n_scale * (x[..., :, None] - y[..., None, :]) ** 2 / (2.0 * t)


def _check_pair(x, y, t):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != y.shape[-1]:
        raise ValidationError("x and y must have the same number of particles")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and math.isfinite(t)):
        raise ValidationError("non-finite input")
    if t <= 0:
        raise DomainError("time must be positive")
    return x, y


def log_km_density(x, y, t, n_scale):
    """Log-magnitude and sign of the Karlin-McGregor determinant."""
    x, y = _check_pair(x, y, t)
    n = x.size
    if np.unique(x).size < n or np.unique(y).size < n:
        return KernelEval(-math.inf, 0)
    e = _exponents(x, y, t, n_scale)
    shift = e.max(axis=1)
    m = np.exp(e - shift[:, None])
    lu, piv = scipy.linalg.lu_factor(m, check_finite=False)
    d = np.diag(lu)
    if np.any(d == 0):
        return KernelEval(-math.inf, 0)
    swaps = np.count_nonzero(piv != np.arange(n))
    sign = (-1) ** swaps * int(np.prod(np.sign(d)))
    logdet = float(np.sum(np.log(np.abs(d))))
    const = 0.5 * n * math.log(n_scale / (2.0 * math.pi * t))
    return KernelEval(const + float(shift.sum()) + logdet, sign)


def _drift_batch(x, b, tau, n_scale):
    """Drift for a batch ``x`` of shape (..., n); returns (drift, rcond).

    ``tau`` is a scalar or has the batch shape of ``x``.
    """
    tau = np.asarray(tau, dtype=float)
    e = _exponents(x, b, tau[..., None, None], n_scale)
    m = np.exp(e - e.max(axis=-1, keepdims=True))
    n = x.shape[-1]
    eye = np.broadcast_to(np.eye(n), m.shape)
    with np.errstate(all="ignore"):
        try:
            minv = np.linalg.solve(m, eye)
        except np.linalg.LinAlgError:
            minv = np.full_like(m, np.nan)
    norm_m = np.abs(m).sum(axis=-2).max(axis=-1)
    norm_inv = np.abs(minv).sum(axis=-2).max(axis=-1)
    rcond = 1.0 / (norm_m * norm_inv)
    rcond = np.where(np.isfinite(rcond), rcond, 0.0)
    # (M B M^{-1})_ii = sum_j M_ij b_j (M^{-1})_ji
    mbm = np.einsum("...ij,...j,...ji->...i", m, b, minv)
    return n_scale / tau[..., None] * (mbm - x), rcond


def km_drift(x, b, t, n_scale):
    """Gradient in ``x`` of ``log p_{1-t}(x, b)`` (not divided by ``n_scale``)."""
    x = np.asarray(x, dtype=float)
    b = np.asarray(b, dtype=float)
    if not t < 1:
        raise DomainError("t must be < 1")
    _check_pair(x, b, 1.0 - t)
    if np.any(np.diff(b) <= 0):
        raise ValidationError("exact drift needs strictly increasing b; use km_drift_confluent for b = const")
    drift, rcond = _drift_batch(x, b, 1.0 - t, n_scale)
    if rcond < RCOND_MIN:
        raise ConditioningError(
            f"Karlin-McGregor matrix ill-conditioned (rcond={rcond:.3g})", x=x, b=b, t=t, rcond=rcond)
    return drift


def km_drift_confluent(x, c, t, n_scale):
    """Drift for the confluent endpoint ``b_j = c`` for all ``j``.

    ``sum_{j != i} 1/(x_i - x_j) - n (x_i - c) / (1 - t)``.
    """
    x = np.asarray(x, dtype=float)
    if not t < 1:
        raise DomainError("t must be < 1")
    if not (np.all(np.isfinite(x)) and math.isfinite(c)):
        raise ValidationError("non-finite input")
    return interaction(x) - n_scale * (x - c) / (1.0 - t)


def interaction(x):
    """``sum_{j != i} 1/(x_i - x_j)`` along the last axis."""
    d = x[..., :, None] - x[..., None, :]
    n = x.shape[-1]
    idx = np.arange(n)
    d[..., idx, idx] = np.inf
    return np.sum(1.0 / d, axis=-1)
