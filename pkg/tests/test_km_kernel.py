import math

import mpmath
import numpy as np
import pytest

from nibridge import km_kernel
from nibridge.errors import ConditioningError, DomainError, ValidationError


def cofactor_log_density(x, y, t, n):
    """log of the 2x2 determinant written out by hand."""
    e = lambda a, b: -n * (a - b) ** 2 / (2.0 * t)
    la = e(x[0], y[0]) + e(x[1], y[1])
    lb = e(x[0], y[1]) + e(x[1], y[0])
    return math.log(n / (2.0 * math.pi * t)) + la + math.log1p(-math.exp(lb - la))


def random_instance(rng, n):
    x = np.sort(rng.uniform(-1.5, 1.5, n)) + 0.05 * np.arange(n)
    b = np.sort(rng.uniform(-1.5, 1.5, n)) + 0.05 * np.arange(n)
    return x, b, rng.uniform(0.0, 0.8)


def fd_gradient(x, b, t, n, h=1e-6):
    g = np.empty(x.size)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (km_kernel.log_km_density(xp, b, 1 - t, n).log_density
                - km_kernel.log_km_density(xm, b, 1 - t, n).log_density) / (2 * h)
    return g


def test_scalar_gaussian_log_density():
    ev = km_kernel.log_km_density([0.0], [0.0], 1.0, 1)
    assert ev.log_density == pytest.approx(-0.918939, abs=1e-6)
    assert ev.sign == 1


def test_two_particles_match_cofactor_expansion():
    rng = np.random.default_rng(3)
    for _ in range(50):
        x = np.sort(rng.normal(size=2))
        y = np.sort(rng.normal(size=2))
        t = rng.uniform(0.1, 2.0)
        got = km_kernel.log_km_density(x, y, t, 2).log_density
        ref = cofactor_log_density(x, y, t, 2)
        assert got == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_coincident_coordinates_give_zero_sign():
    ev = km_kernel.log_km_density([0.3, 0.3, 1.0], [0.0, 0.5, 1.0], 0.5, 3)
    assert ev.sign == 0 and ev.log_density == -math.inf


def test_log_density_survives_underflow():
    # the determinant is below the smallest double; high-precision oracle
    n, t = 30, 2e-3
    b = np.linspace(-3.0, 3.0, n)
    x = b + 0.08 * (-1.0) ** np.arange(n)
    raw = np.sqrt(n / (2 * np.pi * t)) * np.exp(-n * (x[:, None] - b[None, :]) ** 2 / (2 * t))
    assert np.linalg.det(raw) == 0.0
    ev = km_kernel.log_km_density(x, b, t, n)
    with mpmath.workdps(50):
        m = mpmath.matrix([[mpmath.sqrt(mpmath.mpf(n) / (2 * mpmath.pi * t))
                            * mpmath.exp(-n * (mpmath.mpf(xi) - mpmath.mpf(bj)) ** 2 / (2 * t))
                            for bj in b] for xi in x])
        ref = float(mpmath.log(mpmath.det(m)))
    assert ev.sign == 1
    assert ev.log_density == pytest.approx(ref, rel=1e-12)


def test_log_density_validation():
    with pytest.raises(DomainError):
        km_kernel.log_km_density([0.0], [0.0], 0.0, 1)
    with pytest.raises(ValidationError):
        km_kernel.log_km_density([0.0, np.nan], [0.0, 1.0], 1.0, 2)
    with pytest.raises(ValidationError):
        km_kernel.log_km_density([0.0], [0.0, 1.0], 1.0, 2)


def test_row_swap_flips_sign():
    rng = np.random.default_rng(11)
    for n in range(2, 7):
        x = np.sort(rng.normal(size=n))
        y = np.sort(rng.normal(size=n))
        a = km_kernel.log_km_density(x, y, 0.7, n)
        y2 = y.copy()
        y2[[0, -1]] = y2[[-1, 0]]
        b = km_kernel.log_km_density(x, y2, 0.7, n)
        assert b.sign == -a.sign
        assert b.log_density == pytest.approx(a.log_density, rel=1e-10)


def test_semigroup_two_particles():
    n, s, t = 1, 0.3, 0.8
    x, y = np.array([-0.4, 0.5]), np.array([-0.2, 0.9])
    # the integrand is smooth and Gaussian-tailed: a plain lattice sum is very accurate
    z = np.linspace(-4.0, 4.0, 201)
    h = z[1] - z[0]
    total = 0.0
    for i, z1 in enumerate(z):
        for z2 in z[i + 1:]:
            zz = np.array([z1, z2])
            total += math.exp(km_kernel.log_km_density(x, zz, s, n).log_density
                              + km_kernel.log_km_density(zz, y, t - s, n).log_density)
    total *= h * h
    ref = math.exp(km_kernel.log_km_density(x, y, t, n).log_density)
    assert total == pytest.approx(ref, rel=1e-3)


def test_scalar_drift():
    assert km_kernel.km_drift([0.0], [1.0], 0.5, 4)[0] == pytest.approx(8.0)


def test_drift_matches_finite_differences_n4():
    rng = np.random.default_rng(5)
    x, b, t = random_instance(rng, 4)
    d = km_kernel.km_drift(x, b, t, 4)
    fd = fd_gradient(x, b, t, 4)
    assert np.max(np.abs(d - fd)) / np.max(np.abs(fd)) < 1e-6


def test_drift_antisymmetric_for_symmetric_data():
    x = np.array([-1.0, -0.2, 0.2, 1.0])
    b = np.array([-0.7, -0.3, 0.3, 0.7])
    d = km_kernel.km_drift(x, b, 0.4, 4)
    np.testing.assert_allclose(d, -d[::-1], atol=1e-10)


def test_drift_needs_distinct_targets():
    with pytest.raises(ValidationError):
        km_kernel.km_drift([0.0, 1.0], [0.5, 0.5], 0.2, 2)
    with pytest.raises(DomainError):
        km_kernel.km_drift([0.0], [1.0], 1.0, 1)


def test_drift_reports_ill_conditioning():
    # targets 1e-15 apart: the kernel matrix is singular to working precision
    with pytest.raises(ConditioningError) as info:
        km_kernel.km_drift([-0.5, 0.5], [0.0, 1e-15], 0.5, 2)
    assert info.value.t == 0.5 and info.value.rcond < km_kernel.RCOND_MIN


def test_confluent_drift_example():
    np.testing.assert_allclose(km_kernel.km_drift_confluent([-1.0, 1.0], 0.0, 0.5, 2), [3.5, -3.5])


def test_confluent_drift_scalar_and_symmetric():
    assert km_kernel.km_drift_confluent([0.4], 1.0, 0.2, 3)[0] == pytest.approx(3 * 0.6 / 0.8)
    d = km_kernel.km_drift_confluent([-2.0, -0.5, 0.5, 2.0], 0.0, 0.3, 4)
    np.testing.assert_allclose(d, -d[::-1], atol=1e-14)


def test_exact_drift_approaches_confluent_limit():
    x = np.array([-0.6, 0.4])
    eps = 1e-5
    d = km_kernel.km_drift(x, [0.1 - eps, 0.1 + eps], 0.3, 2)
    c = km_kernel.km_drift_confluent(x, 0.1, 0.3, 2)
    assert np.max(np.abs(d - c)) < 1e-3


def test_interaction_batches():
    x = np.array([[-1.0, 0.0, 2.0], [0.0, 1.0, 3.0]])
    ref = np.array([[1 / -1 + 1 / -3, 1 / 1 + 1 / -2, 1 / 3 + 1 / 2],
                    [1 / -1 + 1 / -3, 1 / 1 + 1 / -2, 1 / 3 + 1 / 2]])
    np.testing.assert_allclose(km_kernel.interaction(x), ref)
