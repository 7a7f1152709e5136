import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fpplab.capacities import DistributionSpec, sample_capacities
from fpplab.lattice_cylinder import CylinderSpec, HeightRule, build_cylinder
from fpplab.maxflow import tau
from fpplab.montecarlo import (InsufficientDataError, binomial_interval, clear_cache, default_family,
                               estimate_nu, regime_fit, tail_from_samples, tail_ladder, tail_probability,
                               tau_samples)

CONST = DistributionSpec.parse("constant:1")
EXPO = DistributionSpec.parse("exponential:1")
BERN = DistributionSpec.parse("bernoulli:0.7")


def test_constant_nu_is_exact():
    fam = default_family(2, height_rule=HeightRule("power", 1, 1))
    est = estimate_nu(CylinderSpec.straight(2, [1], n=1, height=5), CONST, [10], 20, 0)[0]
    assert est.mean == 1.1 and est.se == 0.0
    for e in estimate_nu(fam, CONST, [3, 6], 5, 0):
        assert e.mean == pytest.approx((e.n + 1) / e.n) and e.se == 0


def test_tau_samples_match_direct_solves():
    clear_cache()
    spec = default_family(2).at(5)
    graph = build_cylinder(spec)
    x = tau_samples(spec, EXPO, 6, 9)
    for r in range(6):
        caps = sample_capacities(graph, EXPO, 9, r, stream=5)
        assert x[r] == tau(graph, caps).value


def test_tau_samples_independent_of_workers_and_chunks():
    spec = default_family(2).at(4)
    clear_cache()
    a = tau_samples(spec, BERN, 300, 1, workers=1, chunk=1000)
    clear_cache()
    b = tau_samples(spec, BERN, 300, 1, workers=3, chunk=70)
    clear_cache()
    c = tau_samples(spec, BERN, 120, 1)
    d = tau_samples(spec, BERN, 300, 1)  # extends the cache
    assert np.array_equal(a, b) and np.array_equal(a, d) and np.array_equal(a[:120], c)


def test_degenerate_scale_is_skipped():
    fam = default_family(2, height_rule=HeightRule("fixed", 0))
    out = estimate_nu(fam, EXPO, [3], 5, 0)
    assert out[0].status.startswith("skipped")
    with pytest.raises(ValueError):
        estimate_nu(fam, EXPO, [3], 0, 0)


def test_nu_estimate_consistent_with_clt():
    est = estimate_nu(default_family(2), EXPO, [6], 400, 2)[0]
    assert est.mean > 0 and est.se > 0
    other = estimate_nu(default_family(2), EXPO, [6], 400, 3)[0]
    assert abs(est.mean - other.mean) < 5 * math.hypot(est.se, other.se)


def test_tail_examples():
    spec = default_family(2).at(6)
    assert tail_probability(spec, CONST, 0.5, 10, 0).p_hat == 1.0
    uni = tail_probability(spec, DistributionSpec.parse("uniform:1"), 2.0, 500, 0)
    assert uni.p_hat == 0.0 and uni.ci_lo == 0.0 and uni.ci_hi == pytest.approx(3 / 500)
    assert uni.neg_log == math.inf
    with pytest.raises(ValueError):
        tail_probability(spec, CONST, 0.0, 10, 0)


def test_binomial_interval_reference():
    lo, hi = binomial_interval(7, 100)
    ref = stats.binomtest(7, 100).proportion_ci(0.95, method="exact")
    assert lo == pytest.approx(ref.low, rel=1e-9) and hi == pytest.approx(ref.high, rel=1e-9)
    assert binomial_interval(100, 100)[1] == 1.0


@given(st.integers(0, 200), st.integers(1, 200))
@settings(max_examples=100, deadline=None)
def test_interval_contains_estimate(hits, extra):
    reps = hits + extra
    lo, hi = binomial_interval(hits, reps)
    assert 0 <= lo <= hits / reps <= hi <= 1


@given(st.lists(st.floats(0, 5), min_size=1, max_size=200), st.floats(0.01, 5), st.floats(0.0, 2))
@settings(max_examples=100, deadline=None)
def test_p_hat_monotone_in_lambda(samples, lam, step):
    x = np.array(samples)
    a = tail_from_samples(x, lam, 4, 4.0, 2)
    b = tail_from_samples(x, lam + step, 4, 4.0, 2)
    assert b.p_hat <= a.p_hat


def test_regime_fit_synthetic():
    fit = regime_fit([(4, 16), (8, 64), (12, 144)], d=2)
    assert fit.exponent == pytest.approx(2.0, abs=1e-12)
    assert fit.classification == "volume"
    fit = regime_fit([(4, 4), (8, 8), (12, 12)], d=2)
    assert fit.exponent == pytest.approx(1.0, abs=1e-12)
    assert fit.classification == "surface"
    assert max(abs(r) for r in fit.residuals) < 1e-12
    with pytest.raises(InsufficientDataError):
        regime_fit([(4, 16), (8, 64)])


def test_regime_fit_distinguishes_min_regime():
    # h(n) = n^2 separates the min(n, h) and h speeds
    pts = [(n, n * n) for n in (4, 8, 16)]
    fit = regime_fit(pts, d=2, heights=[n * n for n in (4, 8, 16)])
    assert fit.classification == "min-regime"
    assert fit.candidate_slopes["volume"] == pytest.approx(3.0)


def test_regime_fit_inconclusive():
    pts = [(n, n ** 3.5) for n in (4, 8, 16)]
    assert regime_fit(pts, d=2).classification == "inconclusive"


def test_ladder_recalibrates_into_range():
    clear_cache()
    res = tail_ladder(default_family(2), EXPO, [3, 4, 5], 400, 0, lam=10.0, pilot_reps=100)
    assert res.recalibrated and res.lam != 10.0
    assert any("recalibrated" in n for n in res.notes)
    for e in res.estimates:
        assert 1e-4 < e.p_hat < 0.5
    res2 = tail_ladder(default_family(2), EXPO, [3, 4, 5], 400, 0, pilot_reps=100)
    assert math.isfinite(res2.nu_pilot) and res2.lam_initial == pytest.approx(1.3 * res2.nu_pilot)
