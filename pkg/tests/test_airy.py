import math

import mpmath
import numpy as np
import pytest
from scipy import integrate, special

from nibridge import airy
from nibridge.errors import DomainError, OracleError


@pytest.fixture(scope="module")
def painleve():
    """F2 from the Hastings-McLeod solution of q'' = s q + 2 q^3, q ~ Ai at +inf.

    Integrated leftwards from x = 8, where q = Ai to far below 1e-12; returns
    ``F2(s) = exp(-int_s^inf (x - s) q(x)^2 dx)``.
    """
    x0 = 8.0
    ai, aip, _, _ = special.airy(x0)

    def rhs(x, y):
        q, p = y[0], y[1]
        return [p, x * q + 2 * q**3, -q * q, -x * q * q]

    sol = integrate.solve_ivp(rhs, [x0, -4.0], [ai, aip, 0.0, 0.0], method="DOP853",
                              rtol=1e-13, atol=1e-22, dense_output=True)

    def f2(s):
        _, _, i1, i2 = sol.sol(s)
        return math.exp(-(i2 - s * i1))

    return f2


# --------------------------------------------------------------------- Ai

def test_ai_at_zero():
    ref = 3 ** (-2 / 3) / math.gamma(2 / 3)
    assert airy.airy_ai(0.0) == pytest.approx(ref, abs=1e-14)
    assert airy.airy_ai(0.0) == pytest.approx(0.3550280539, abs=1e-10)


def test_ai_right_tail_is_tiny_and_positive():
    assert 0 < airy.airy_ai(10.0) < 1e-9


def test_ai_matches_scipy_everywhere():
    x = np.linspace(-50.0, 50.0, 20001)
    ref = special.airy(x)[0]
    assert np.max(np.abs(airy.airy_ai(x) - ref)) < 1e-12


@pytest.mark.parametrize("x", [-37.3, -8.01, -7.99, -4.2, 3.9, 4.1, 7.75, 8.25, 31.0])
def test_ai_and_derivative_match_mpmath(x):
    ai, aip = airy.airy_pair(np.array(x))
    assert float(ai) == pytest.approx(float(mpmath.airyai(x)), abs=1e-12)
    # the derivative grows like |x|^(1/4) on the left
    assert float(aip) == pytest.approx(float(mpmath.airyai(x, derivative=1)), abs=1e-12 * max(1, abs(x)))


def test_ai_solves_airy_equation():
    h = 1e-3
    x = np.linspace(-5.0, 5.0, 201)
    second = (airy.airy_ai(x + h) - 2 * airy.airy_ai(x) + airy.airy_ai(x - h)) / h**2
    assert np.max(np.abs(second - x * airy.airy_ai(x))) < 1e-6


def test_ai_domain():
    with pytest.raises(DomainError):
        airy.airy_ai(50.5)
    with pytest.raises(DomainError):
        airy.airy_ai([0.0, -60.0])


# ----------------------------------------------------------------- kernel

def test_kernel_diagonal_is_the_limit():
    rng = np.random.default_rng(1)
    x = rng.uniform(-6, 4, 20)
    d = 1e-5
    # symmetric difference quotient: O(d^2) truncation
    limit = 0.5 * (airy.airy_kernel(x, x + d) + airy.airy_kernel(x, x - d))
    np.testing.assert_allclose(airy.airy_kernel(x, x), limit, atol=1e-8)


def test_kernel_symmetric():
    x, y = np.meshgrid(np.linspace(-3, 3, 7), np.linspace(-2, 5, 7))
    np.testing.assert_allclose(airy.airy_kernel(x, y), airy.airy_kernel(y, x), atol=1e-15)


# -------------------------------------------------------------------- TW2

def test_tw2_limits():
    assert airy.tw2_cdf(6.0) == pytest.approx(1.0, abs=1e-8)
    assert airy.tw2_cdf(-10.0) < 1e-6


@pytest.mark.parametrize("s", [-3.5, -2.0, -1.0, 0.0, 1.5, 3.0])
def test_tw2_matches_painleve(painleve, s):
    assert airy.tw2_cdf(s) == pytest.approx(painleve(s), abs=1e-8)


def test_tw2_reports_unconverged_quadrature():
    with pytest.raises(OracleError):
        airy.tw2_cdf(-3.0, quad_nodes=4)


@pytest.fixture(scope="module")
def table():
    return airy.default_table()


def test_table_moments(table):
    mean, var = table.moments()
    # published high-precision constants
    assert mean == pytest.approx(-1.7710868074, abs=1e-4)
    assert var == pytest.approx(0.8131947928, abs=1e-4)


def test_table_is_increasing(table):
    f = table.cdf
    assert np.all(np.diff(f) >= 0)
    inner = (f > 1e-12) & (f < 1 - 1e-12)
    assert np.all(np.diff(f[inner]) > 0)
    assert table.s_grid[0] == -10.0 and table.s_grid[-1] == pytest.approx(6.0)


def test_table_quantile_inverts_cdf(table):
    p = np.array([0.05, 0.3, 0.5, 0.9])
    np.testing.assert_allclose(table(table.quantile(p)), p, atol=1e-6)


def test_table_csv_roundtrip(tmp_path, table):
    table.to_csv(tmp_path / "tw2.csv")
    back = airy.TWTable.from_csv(tmp_path / "tw2.csv")
    np.testing.assert_array_equal(back.s_grid, table.s_grid)
    np.testing.assert_array_equal(back.cdf, table.cdf)


def test_table_interpolates_and_clamps(table):
    assert table(-50.0) == table.cdf[0]
    assert table(50.0) == table.cdf[-1]
    mid = 0.5 * (table.s_grid[100] + table.s_grid[101])
    assert table(mid) == pytest.approx(0.5 * (table.cdf[100] + table.cdf[101]))
