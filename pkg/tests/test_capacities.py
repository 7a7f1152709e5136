import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from fpplab.capacities import (ALL_EXP_MOMENTS, BOUNDED, SOME_EXP_MOMENT, DistributionSpec,
                               InvalidDistributionError, empirical_log_mgf, log_mgf, moment_class,
                               quantize, sample_capacities, uniforms)
from fpplab.lattice_cylinder import CylinderSpec, build_cylinder

GRAPH = build_cylinder(CylinderSpec.straight(2, [1], n=6, height=3))
LAWS = ["constant:2", "bernoulli:0.5", "uniform:3", "exponential:2", "half_gaussian:1.5"]


def test_parse_and_format():
    d = DistributionSpec.parse("exponential:1")
    assert d.kind == "exponential" and d.param == 1.0
    assert str(d) == "exponential:1"
    assert DistributionSpec.parse(str(DistributionSpec("uniform", (0.25,)))) == DistributionSpec("uniform", (0.25,))


@pytest.mark.parametrize("text", ["gamma:1", "bernoulli:1.5", "exponential:0", "uniform:-1",
                                  "constant:-1", "exponential", "exponential:x", "exponential:nan"])
def test_invalid_laws(text):
    with pytest.raises(InvalidDistributionError):
        DistributionSpec.parse(text)


def test_constant_capacities():
    caps = sample_capacities(GRAPH, DistributionSpec.parse("constant:1"), 0, 0)
    assert caps.values.dtype == np.int64
    assert np.all(caps.values == 1)


def test_bernoulli_is_deterministic_and_integer():
    dist = DistributionSpec.parse("bernoulli:0.5")
    a = sample_capacities(GRAPH, dist, 7, 3)
    b = sample_capacities(GRAPH, dist, 7, 3)
    assert a.integer_mode
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, sample_capacities(GRAPH, dist, 7, 4).values)
    assert not np.array_equal(a.values, sample_capacities(GRAPH, dist, 8, 3).values)


def test_values_depend_only_on_edge_index():
    # the first k uniforms do not depend on how many are drawn
    u_long = uniforms(1000, 5, 2)
    u_short = uniforms(10, 5, 2)
    assert np.array_equal(u_long[:10], u_short)
    assert not np.array_equal(uniforms(10, 5, 2, stream=1), u_short)


def test_exponential_law_of_large_numbers():
    x = DistributionSpec.parse("exponential:1").inverse_cdf(uniforms(10**6, 0, 0))
    assert abs(x.mean() - 1) < 0.01


@pytest.mark.parametrize("law", LAWS)
def test_samples_follow_the_law(law):
    dist = DistributionSpec.parse(law)
    x = dist.inverse_cdf(uniforms(20000, 11, 0))
    assert np.all(x >= 0)
    assert abs(x.mean() - dist.mean()) < 5 * max(x.std(), 1e-12) / math.sqrt(len(x)) + 1e-12
    ref = {"uniform": stats.uniform(0, 3), "exponential": stats.expon(scale=0.5),
           "half_gaussian": stats.halfnorm(scale=1.5)}.get(dist.kind)
    if ref is not None:
        assert stats.kstest(x, ref.cdf).pvalue > 1e-4


def test_moment_classes():
    assert moment_class(DistributionSpec.parse("bernoulli:0.7")) == BOUNDED
    assert moment_class(DistributionSpec.parse("uniform:1")) == BOUNDED
    assert moment_class(DistributionSpec.parse("exponential:1")) == SOME_EXP_MOMENT
    assert moment_class(DistributionSpec.parse("half_gaussian:1")) == ALL_EXP_MOMENTS


def test_log_mgf_examples():
    expo = DistributionSpec.parse("exponential:1")
    assert log_mgf(expo, 0.5) == pytest.approx(math.log(2), rel=1e-12)
    assert log_mgf(expo, 1.0) == math.inf
    assert log_mgf(expo, 3.0) == math.inf
    for law in LAWS:
        assert log_mgf(DistributionSpec.parse(law), 0.0) == 0.0
    with pytest.raises(ValueError):
        log_mgf(expo, -1)


def _numeric_log_mgf(dist, theta):
    if dist.kind == "constant":
        return theta * dist.param
    if dist.kind == "bernoulli":
        return math.log(1 - dist.param + dist.param * math.exp(theta))
    logpdf = {"uniform": lambda x: -math.log(dist.param),
              "exponential": lambda x: math.log(dist.param) - dist.param * x,
              "half_gaussian": lambda x: stats.halfnorm(scale=dist.param).logpdf(x)}[dist.kind]
    hi = dist.param if dist.kind == "uniform" else math.inf
    val, _ = integrate.quad(lambda x: math.exp(theta * x + logpdf(x)), 0, hi, limit=200)
    return math.log(val)


@given(st.sampled_from(LAWS), st.floats(0.01, 1.9))
@settings(max_examples=80, deadline=None)
def test_log_mgf_matches_quadrature(law, theta):
    dist = DistributionSpec.parse(law)
    if dist.kind == "exponential" and theta >= dist.param * 0.95:
        assert theta < dist.param or log_mgf(dist, theta) == math.inf
        return
    assert log_mgf(dist, theta) == pytest.approx(_numeric_log_mgf(dist, theta), rel=1e-7, abs=1e-10)


@given(st.sampled_from(LAWS), st.floats(0.0, 1.5), st.floats(0.0, 1.5))
@settings(max_examples=60, deadline=None)
def test_log_mgf_convex(law, a, b):
    dist = DistributionSpec.parse(law)
    mid = log_mgf(dist, (a + b) / 2)
    assert mid <= (log_mgf(dist, a) + log_mgf(dist, b)) / 2 + 1e-9


def test_uniform_log_mgf_large_argument_is_stable():
    dist = DistributionSpec.parse("uniform:1")
    assert log_mgf(dist, 500.0) == pytest.approx(500 - math.log(500), rel=1e-12)


def test_empirical_log_mgf_and_quantize():
    x = np.array([0.0, 1.0, 2.0])
    assert empirical_log_mgf(x, 1.0) == pytest.approx(math.log((1 + math.e + math.e**2) / 3))
    assert quantize(np.array([0.24, 0.26]), 10).tolist() == [2, 3]


def test_non_integer_law_cannot_be_forced_to_integers():
    with pytest.raises(InvalidDistributionError):
        sample_capacities(GRAPH, DistributionSpec.parse("exponential:1"), 0, 0, integer=True)
