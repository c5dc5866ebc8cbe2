import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from coflowd.distributions import (ConfigError, Params, SizeSpec, analytic_moments,
                                   empirical_from_trace, expected_size, moments_to_params,
                                   sample, sample_many, spec_moments)


def test_gamma_params():
    p = moments_to_params(SizeSpec("gamma", 10.0, 0.5))
    assert p.shape == pytest.approx(4.0)
    assert p.scale == pytest.approx(2.5)


def test_pareto_params_against_integrated_pdf():
    p = moments_to_params(SizeSpec("pareto", 10.0, 1.0))
    # frozen from the closed form 1 + sqrt(2) and 10 (z - 1) / z
    assert p.shape == pytest.approx(2.414213562373095, abs=1e-12)
    assert p.scale == pytest.approx(5.857864376269049, abs=1e-12)
    # independent check: integrate the density x_m^z z / x^(z+1) on [x_m, inf)
    z, xm = p.shape, p.scale
    pdf = lambda x: z * xm**z / x ** (z + 1)
    m1 = integrate.quad(lambda x: x * pdf(x), xm, np.inf)[0]
    m2 = integrate.quad(lambda x: x * x * pdf(x), xm, np.inf, limit=200)[0]
    assert m1 == pytest.approx(10.0, rel=1e-8)
    assert math.sqrt(m2 - m1 * m1) / m1 == pytest.approx(1.0, rel=1e-6)


def test_normal_params():
    p = moments_to_params(SizeSpec("normal", 10.0, 0.5))
    assert (p.loc, p.scale) == (10.0, 5.0)


def test_zero_cv_collapses_to_fixed():
    for fam in ("gamma", "normal", "pareto"):
        p = moments_to_params(SizeSpec(fam, 7.0, 0.0))
        assert p.family == "fixed" and p.loc == 7.0
        assert (sample_many(SizeSpec(fam, 7.0, 0.0), np.random.default_rng(0), 5) == 7.0).all()


def test_fixed_sample():
    rng = np.random.default_rng(1)
    assert all(sample(SizeSpec.fixed(10.0), rng) == 10.0 for _ in range(20))


@settings(max_examples=200, deadline=None)
@given(fam=st.sampled_from(["gamma", "normal", "pareto"]),
       mean=st.floats(0.01, 1e4), cv=st.floats(0.01, 10.0))
def test_moment_round_trip(fam, mean, cv):
    m, eta = analytic_moments(moments_to_params(SizeSpec(fam, mean, cv)))
    assert m == pytest.approx(mean, rel=1e-12)
    assert eta == pytest.approx(cv, rel=1e-12)


def test_truncated_normal_moments_match_scipy():
    for eta in (0.5, 1.0, 2.0):
        spec = SizeSpec("normal", 10.0, eta)
        a = -1.0 / eta
        ref = stats.truncnorm(a, np.inf, loc=10.0, scale=10.0 * eta)
        m, s = spec_moments(spec)
        assert m == pytest.approx(ref.mean(), rel=1e-10)
        assert s == pytest.approx(ref.std(), rel=1e-10)
    assert expected_size(SizeSpec("normal", 10.0, 2.0)) > 10.0


def test_gamma_law_of_large_numbers():
    x = sample_many(SizeSpec("gamma", 10.0, 0.5), np.random.default_rng(2), 10**6)
    assert abs(x.mean() - 10.0) < 0.05
    assert abs(x.std() / x.mean() - 0.5) < 0.01


def test_pareto_heavy_tail_mean():
    x = sample_many(SizeSpec("pareto", 10.0, 2.0), np.random.default_rng(3), 10**7)
    assert abs(x.mean() - 10.0) < 0.5
    assert x.min() >= moments_to_params(SizeSpec("pareto", 10.0, 2.0)).scale


def test_normal_samples_positive_and_match_truncated_mean():
    spec = SizeSpec("normal", 10.0, 2.0)
    x = sample_many(spec, np.random.default_rng(4), 10**6)
    assert (x > 0).all()
    assert x.mean() == pytest.approx(spec_moments(spec)[0], rel=5e-3)


@pytest.mark.parametrize("spec", [SizeSpec("gamma", 10, 1), SizeSpec("normal", 10, 2),
                                  SizeSpec("pareto", 10, 2),
                                  SizeSpec("empirical", table=((1.0, 0.5), (3.0, 0.5)))])
def test_sampling_is_pure_function_of_rng_state(spec):
    a = sample_many(spec, np.random.default_rng(99), 1000)
    b = sample_many(spec, np.random.default_rng(99), 1000)
    assert np.array_equal(a, b)
    assert (a > 0).all()


def test_empirical_from_trace_counts():
    spec = empirical_from_trace([2, 2, 6])
    assert spec.table == ((2.0, 2 / 3), (6.0, 1 / 3))
    assert spec.mean == pytest.approx(10 / 3)


def test_single_size_trace_is_degenerate():
    spec = empirical_from_trace([5, 5, 5])
    assert spec.is_degenerate
    assert (sample_many(spec, np.random.default_rng(0), 50) == 5.0).all()


def test_empirical_probabilities_renormalized():
    spec = empirical_from_trace(np.random.default_rng(0).integers(1, 1000, 997))
    assert abs(sum(p for _, p in spec.table) - 1.0) <= 1e-12


def test_empirical_sample_frequencies():
    spec = empirical_from_trace([2, 2, 6])
    x = sample_many(spec, np.random.default_rng(5), 60000)
    assert (x == 2).mean() == pytest.approx(2 / 3, abs=0.01)


@pytest.mark.parametrize("bad", [
    dict(family="gamma", mean=0.0, cv=1.0),
    dict(family="gamma", mean=10.0, cv=-0.1),
    dict(family="lognormal", mean=10.0, cv=1.0),
    dict(family="empirical", table=((1.0, 0.3), (2.0, 0.3))),
    dict(family="empirical", table=()),
])
def test_invalid_specs(bad):
    with pytest.raises(ConfigError):
        SizeSpec(**bad)


def test_empty_trace_rejected():
    with pytest.raises(ConfigError):
        empirical_from_trace([])


def test_json_round_trip():
    for spec in (SizeSpec("gamma", 10.0, 0.5), SizeSpec.fixed(3.0),
                 SizeSpec("empirical", table=((1.0, 0.25), (2.0, 0.75)))):
        assert SizeSpec.from_json(spec.to_json()) == spec
    assert SizeSpec.from_json(4) == SizeSpec.fixed(4.0)


def test_params_defaults_are_nan():
    p = Params("gamma", shape=1.0, scale=2.0)
    assert math.isnan(p.loc)
