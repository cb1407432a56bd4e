import math

import numpy as np
import pytest

from nibridge import airy, burgers, measures, stats
from nibridge.errors import UsageError
from nibridge.sde import PathEnsemble

SHAPE = burgers.watermelon_shape([0.5])


def ensemble(rows, t=0.5):
    rows = np.asarray(rows, dtype=float)
    return PathEnsemble(np.array([t]), rows[:, None, :])


def quantile_rows(n, samples=3, shift=0.0):
    gamma = measures.quantiles(SHAPE.density_at(0.5), n)
    return np.tile(gamma + shift, (samples, 1))


def grid_shape(s_left, s_right, density=None):
    d = density or measures.semicircle(1.0)
    return burgers.LimitShape([0.5], (d,), (np.zeros(d.grid.size),), [[-1.0, 1.0]], [[s_left, s_right]])


# --------------------------------------------------------------- rigidity

def test_rigidity_of_exact_quantiles_is_zero():
    r = stats.rigidity_report(ensemble(quantile_rows(16)), SHAPE, 0.5)
    assert np.all(r.median_dev == 0) and np.all(r.p95_dev == 0)
    assert r.median_dev.shape == (16,) and r.bulk_median == 0


def test_rigidity_of_shifted_quantiles():
    r = stats.rigidity_report(ensemble(quantile_rows(16, shift=-0.03)), SHAPE, 0.5)
    np.testing.assert_allclose(r.median_dev, 0.03, atol=1e-12)


def test_rigidity_edge_excess():
    rows = quantile_rows(8, samples=2)
    rows[0, -1] = 1.25
    rows[1, 0] = -1.1
    r = stats.rigidity_report(ensemble(rows), SHAPE, 0.5)
    np.testing.assert_allclose(r.edge_excess, [0.25, 0.1], atol=1e-12)


def test_rigidity_translation_equivariant():
    rng = np.random.default_rng(0)
    rows = np.sort(rng.uniform(-1, 1, (20, 12)), axis=1)
    c = 0.75
    moved = burgers.solve_characteristics(measures.point(c), measures.point(c), [0.5])
    a = stats.rigidity_report(ensemble(rows), SHAPE, 0.5)
    b = stats.rigidity_report(ensemble(rows + c), moved, 0.5)
    np.testing.assert_allclose(b.median_dev, a.median_dev, atol=1e-12)
    np.testing.assert_allclose(b.edge_excess, a.edge_excess, atol=1e-12)


def test_rigidity_requires_recorded_time():
    with pytest.raises(UsageError):
        stats.rigidity_report(ensemble(quantile_rows(4)), SHAPE, 0.4)


def test_report_json(tmp_path):
    r = stats.rigidity_report(ensemble(quantile_rows(4)), SHAPE, 0.5)
    r.to_json(tmp_path / "r.json")
    assert (tmp_path / "r.json").read_text().startswith("{")


# -------------------------------------------------------------- stieltjes

def test_stieltjes_of_quantile_configuration():
    for n in (16, 64):
        res = stats.stieltjes_compare(ensemble(quantile_rows(n)), SHAPE, 0.5, [2j])
        assert res[0]["valid"] and res[0]["max"] < 2 / n


def test_stieltjes_far_away():
    rng = np.random.default_rng(2)
    rows = np.sort(rng.uniform(-1, 1, (5, 32)), axis=1)
    res = stats.stieltjes_compare(ensemble(rows), SHAPE, 0.5, [100j])
    assert res[0]["max"] < 1e-3


def test_stieltjes_flags_points_outside_domain():
    res = stats.stieltjes_compare(ensemble(quantile_rows(32)), SHAPE, 0.5, [0.2 + 1e-3j, 0.5, 1j])
    assert [r["valid"] for r in res] == [False, False, True]
    assert "median" not in res[0]


# ------------------------------------------------------------ edge samples

def test_eta_zero_at_edge():
    rows = quantile_rows(8, samples=2)
    rows[:, 0] = -1.0
    es = stats.edge_statistics(ensemble(rows), SHAPE, 0.5, "left")
    np.testing.assert_allclose(es.eta, 0.0, atol=1e-12)
    assert es.scaling()["side"] == "left" and es.s > 0


def test_eta_sign_convention():
    rows = quantile_rows(8, samples=1)
    rows[0, -1] = 1.1
    es = stats.edge_statistics(ensemble(rows), SHAPE, 0.5, "right")
    assert es.eta[0] == pytest.approx((2 ** 1.5 * 8) ** (2 / 3) * 0.1)


def test_eta_scaling_equivariance():
    rng = np.random.default_rng(3)
    rows = np.sort(rng.uniform(-1.1, 1.1, (10, 6)), axis=1)
    a = stats.edge_statistics(ensemble(rows), grid_shape(1.0, 1.0), 0.5, "right")
    b = stats.edge_statistics(ensemble(rows), grid_shape(2.0, 2.0), 0.5, "right")
    np.testing.assert_allclose(b.eta, 2 ** (2 / 3) * a.eta, rtol=1e-14)


def test_eta_stable_under_refit():
    rng = np.random.default_rng(4)
    fine = measures.semicircle(1.0, points=2 * measures.DEFAULT_POINTS - 1)
    noisy = measures.GridDensity.normalized(fine.grid, fine.values * (1 + 1e-4 * rng.standard_normal(fine.grid.size)))
    shapes = []
    for d in (measures.semicircle(1.0), noisy):
        fit = burgers.edge_coefficient(d, "right")
        shapes.append(burgers.LimitShape([0.5], (d,), (np.zeros(d.grid.size),), [[-fit.edge, fit.edge]],
                                         [[fit.s, fit.s]]))
    rows = np.sort(rng.uniform(-1.0, 1.1, (50, 64)), axis=1)
    a, b = (stats.edge_statistics(ensemble(rows), sh, 0.5, "right").eta for sh in shapes)
    assert np.max(np.abs(a - b)) < 1e-2


def test_edge_statistics_errors():
    with pytest.raises(UsageError):
        stats.edge_statistics(ensemble(quantile_rows(4)), SHAPE, 0.5, "top")
    with pytest.raises(UsageError):
        stats.edge_statistics(ensemble(quantile_rows(4)), grid_shape(math.nan, 1.0), 0.5, "left")


def test_edge_samples_csv(tmp_path):
    es = stats.edge_statistics(ensemble(quantile_rows(4)), SHAPE, 0.5, "right")
    es.to_csv(tmp_path / "eta.csv")
    back = np.loadtxt(tmp_path / "eta.csv", skiprows=1, ndmin=1)
    np.testing.assert_array_equal(back, es.eta)


# -------------------------------------------------------------------- KS

@pytest.fixture(scope="module")
def table():
    return airy.default_table()


def test_ks_self_test(table):
    x = table.sample(100_000, np.random.default_rng(5))
    assert stats.ks_distance(x, table) < 0.01


def test_ks_all_below_range(table):
    d = stats.ks_distance(np.full(10, -20.0), table)
    assert d == pytest.approx(1 - table.cdf[0]) and d > 0.999


def test_ks_single_sample_at_median(table):
    assert stats.ks_distance([float(table.quantile(0.5))], table) == pytest.approx(0.5, abs=1e-6)


def test_ks_invariant_under_monotone_maps(table):
    x = table.sample(500, np.random.default_rng(6))
    d1 = stats.ks_distance(x, table)
    d2 = stats.ks_distance(np.exp(x / 3), lambda y: table(3 * np.log(y)))
    assert d2 == pytest.approx(d1, abs=1e-12)


def test_ks_empty():
    with pytest.raises(UsageError):
        stats.ks_distance([], lambda x: x)


# -------------------------------------------------------------- dominance

def test_bands():
    assert stats.dkw_band(1000) == pytest.approx(math.sqrt(math.log(200) / 2000))
    assert stats.ks_band(1000, 1000) == pytest.approx(math.sqrt(2) * stats.dkw_band(1000))


def test_dominance_against_shift():
    rng = np.random.default_rng(7)
    rows = np.sort(rng.normal(size=(400, 5)), axis=1)
    res = stats.dominance_test(ensemble(rows + 0.2), ensemble(rows), 0.5)
    assert res.passed and max(res.max_excess) == 0.0


def test_dominance_against_itself():
    rows = np.sort(np.random.default_rng(8).normal(size=(300, 4)), axis=1)
    assert stats.dominance_test(ensemble(rows), ensemble(rows), 0.5, band="two-sample").passed


def test_dominance_detects_reversal():
    rows = np.sort(np.random.default_rng(9).normal(size=(300, 4)), axis=1)
    res = stats.dominance_test(ensemble(rows - 0.5), ensemble(rows), 0.5)
    assert not res.passed and {v[0] for v in res.violations} == {1, 2, 3, 4}


def test_dominance_usage_errors():
    a = ensemble(np.zeros((3, 4)) + np.arange(4))
    b = ensemble(np.zeros((3, 5)) + np.arange(5))
    with pytest.raises(UsageError):
        stats.dominance_test(a, b, 0.5)
    with pytest.raises(UsageError):
        stats.dominance_test(a, a, 0.5, band="wide")
