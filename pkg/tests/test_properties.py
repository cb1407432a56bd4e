import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nibridge import _integrator, burgers, km_kernel, measures, rng, sde, stats
from nibridge.errors import ConditioningError

finite = st.floats(-5, 5, allow_nan=False)
settings.register_profile("nibridge", max_examples=40, deadline=None)
settings.load_profile("nibridge")


@st.composite
def chamber(draw, n=None, lo=-3.0, hi=3.0):
    """Strictly increasing configuration with gaps of at least 0.05."""
    n = n or draw(st.integers(1, 6))
    steps = draw(arrays(float, n, elements=st.floats(0.05, 1.0)))
    start = draw(st.floats(lo, hi))
    return start + np.cumsum(steps)


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**40), st.integers(0, 2**33), st.integers(0, 1000),
       st.integers(1, 9))
def test_compiled_normals_match_reference(seed, sample, step, stream, n):
    out = np.empty(n)
    _integrator._normals(np.uint64(seed), sample, step, stream, out)
    ref = rng.standard_normals(seed, [sample], step, stream, n)[0]
    assert out.tobytes() == ref.tobytes()


@given(chamber(n=3), chamber(n=3), st.floats(0.05, 2.0))
def test_kernel_symmetric_in_its_arguments(x, y, t):
    a = km_kernel.log_km_density(x, y, t, 3)
    b = km_kernel.log_km_density(y, x, t, 3)
    assert a.sign == b.sign
    assert a.log_density == pytest.approx(b.log_density, rel=1e-9, abs=1e-9)


@given(chamber(n=4), chamber(n=4), st.floats(0.0, 0.8), finite)
def test_drift_translation_invariant(x, b, t, c):
    try:
        d0 = km_kernel.km_drift(x, b, t, 4)
        d1 = km_kernel.km_drift(x + c, b + c, t, 4)
    except ConditioningError:
        # far-apart configurations are legitimately singular to working precision
        assume(False)
    np.testing.assert_allclose(d1, d0, rtol=1e-6, atol=1e-6 * np.max(np.abs(d0)))


@given(st.floats(0.2, 5.0), finite, st.integers(1, 40))
def test_quantiles_ordered_inside_support(radius, center, n):
    d = measures.semicircle(radius, center, points=801)
    q = measures.quantiles(d, n)
    assert np.all(np.diff(q) > 0) or n == 1
    assert d.support[0] < q[0] and q[-1] < d.support[1]


@given(arrays(float, st.integers(1, 30), elements=finite), arrays(float, st.integers(1, 30), elements=finite),
       arrays(float, st.integers(1, 30), elements=finite))
def test_wasserstein_is_a_metric(a, b, c):
    ma, mb, mc = (measures.AtomicMeasure(v) for v in (a, b, c))
    ab = measures.wasserstein1(ma, mb)
    assert ab == pytest.approx(measures.wasserstein1(mb, ma), abs=1e-12)
    assert ab <= measures.wasserstein1(ma, mc) + measures.wasserstein1(mc, mb) + 1e-12


@given(arrays(float, st.integers(1, 20), elements=finite), finite, st.floats(0.01, 5.0))
def test_stieltjes_maps_upper_to_lower(x, re, im):
    assert measures.stieltjes(measures.AtomicMeasure(x), complex(re, im)).imag < 0


@given(st.floats(-10, 10), st.floats(0.3, 3.0))
def test_edge_fit_shift_equivariant(c, radius):
    d = measures.semicircle(radius, points=2001)
    a = burgers.edge_coefficient(d, "left")
    b = burgers.edge_coefficient(measures.GridDensity(d.grid + c, d.values), "left")
    assert b.edge == pytest.approx(a.edge + c, abs=1e-9)
    assert b.s == pytest.approx(a.s, rel=1e-8)


@given(arrays(float, st.integers(1, 50), elements=finite))
def test_ks_distance_in_unit_interval(x):
    d = stats.ks_distance(x, lambda v: 1 / (1 + np.exp(-v)))
    assert 0 <= d <= 1


@given(arrays(float, st.integers(2, 40), elements=st.floats(-3, 3)))
def test_dual_roundtrip_property(v):
    t = np.linspace(0.0, 0.9, v.size)
    s, b = sde.dual_transform(t, v, "bridge->motion")
    t2, v2 = sde.dual_transform(s, b, "motion->bridge")
    np.testing.assert_allclose(v2, v, atol=1e-9)
    np.testing.assert_allclose(t2, t, atol=1e-12)


@given(st.floats(0.02, 0.98), chamber())
def test_watermelon_g_matches_confluent_drift(t, x):
    # the confluent drift without its pair term, per unit of 1/n
    n = x.size
    g = burgers.compute_g(burgers.watermelon_shape([0.5]), t, x)
    ref = (km_kernel.km_drift_confluent(x, 0.0, t, n) - km_kernel.interaction(x)) / n
    np.testing.assert_allclose(g, ref, atol=1e-9)
