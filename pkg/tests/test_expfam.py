"""Тесты ядер экспоненциальных семейств."""

import math

import numpy as np
import pytest
from scipy import special, stats

from matchup_hub.core.exceptions import DomainError
from matchup_hub.core.expfam import (
    MEAN_CLAMP,
    DistributionSpec,
    Family,
    clamp_mean,
    inverse_link,
    link,
    log_density,
    log_density_terms,
    variance_fn,
)


class TestLinks:
    def test_canonical_links_at_reference_points(self):
        assert link(Family.BINOMIAL, np.array([0.5]))[0] == 0.0
        assert link(Family.NORMAL, np.array([1.7]))[0] == 1.7
        assert link(Family.POISSON, np.array([1.0]))[0] == 0.0
        assert Family.BINOMIAL.canonical_link == "logit"

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.1, np.nan])
    def test_logit_rejects_boundary_proportions(self, bad):
        with pytest.raises(DomainError):
            link(Family.BINOMIAL, np.array([0.3, bad]))

    def test_log_rejects_nonpositive_mean(self):
        with pytest.raises(DomainError):
            link(Family.POISSON, np.array([0.0]))

    def test_inverse_link_reference_points(self):
        assert inverse_link("binomial", np.array([0.0]))[0] == 0.5
        assert inverse_link("poisson", np.array([0.0]))[0] == 1.0
        np.testing.assert_array_equal(
            inverse_link("normal", np.array([-2.0, 3.0])), [-2.0, 3.0]
        )

    def test_logistic_approaches_one_monotonically_without_overflow(self):
        theta = np.array([1.0, 5.0, 20.0, 100.0, 1e6])
        p = inverse_link(Family.BINOMIAL, theta)
        assert np.all(np.isfinite(p))
        assert np.all(np.diff(p) >= 0)
        assert np.all(p <= 1.0)
        assert p[-1] > 1 - 1e-12

    def test_inverse_link_inverts_link(self, rng):
        mu = rng.uniform(0.001, 0.999, size=200)
        np.testing.assert_allclose(inverse_link("binomial", link("binomial", mu)), mu, atol=1e-12)
        counts = rng.uniform(0.01, 50.0, size=200)
        np.testing.assert_allclose(
            inverse_link("poisson", link("poisson", counts)), counts, rtol=1e-12
        )


class TestVariance:
    def test_normal_variance_is_dispersion(self):
        np.testing.assert_array_equal(
            variance_fn(Family.NORMAL, np.array([-1.0, 4.0]), 0.09), [0.09, 0.09]
        )

    def test_binomial_and_poisson_variance(self):
        assert variance_fn(Family.BINOMIAL, np.array([0.5]))[0] == 0.25
        assert variance_fn(Family.POISSON, np.array([2.0]))[0] == 2.0

    @pytest.mark.parametrize(
        "family, thetas",
        [
            (Family.BINOMIAL, np.linspace(-4.0, 4.0, 33)),
            (Family.POISSON, np.linspace(-3.0, 3.0, 25)),
        ],
    )
    def test_derivative_of_mean_is_variance(self, family, thetas):
        step = 1e-5
        numeric = (
            inverse_link(family, thetas + step) - inverse_link(family, thetas - step)
        ) / (2 * step)
        analytic = variance_fn(family, inverse_link(family, thetas))
        np.testing.assert_allclose(numeric, analytic, rtol=1e-6, atol=1e-9)

    def test_clamp_keeps_binomial_mean_inside_interval(self):
        clamped = clamp_mean(Family.BINOMIAL, np.array([0.0, 1e-9, 0.5, 1.0]))
        assert clamped.min() >= MEAN_CLAMP
        assert clamped.max() <= 1 - MEAN_CLAMP
        assert clamped[2] == 0.5


class TestLogDensity:
    def test_binomial_pmf_with_coefficient(self):
        spec = DistributionSpec.binomial(np.array([2.0]))
        value = log_density(Family.BINOMIAL, np.array([1.0]), np.array([0.0]), spec)
        assert value == pytest.approx(math.log(0.5), abs=1e-12)
        assert value == pytest.approx(-0.693147, abs=1e-6)

    def test_binomial_all_successes(self):
        n = 7.0
        spec = DistributionSpec.binomial(np.array([n]))
        theta = special.logit(np.array([0.999]))
        value = log_density(Family.BINOMIAL, np.array([n]), theta, spec)
        assert value == pytest.approx(n * math.log(0.999), rel=1e-10)

    @pytest.mark.parametrize("trials", range(1, 11))
    def test_binomial_pmf_sums_to_one(self, trials):
        x = np.arange(trials + 1, dtype=float)
        spec = DistributionSpec.binomial(np.full(x.shape, float(trials)))
        for p in (0.001, 0.05, 0.25, 0.5, 0.8, 0.999):
            theta = np.full(x.shape, special.logit(p))
            total = np.exp(log_density_terms(Family.BINOMIAL, x, theta, spec)).sum()
            assert total == pytest.approx(1.0, abs=1e-12)

    def test_normal_zero_residual(self):
        value = log_density(
            Family.NORMAL, np.array([1.3]), np.array([1.3]), DistributionSpec.normal(1.0)
        )
        assert value == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)

    def test_terms_match_scipy(self, rng):
        trials = rng.integers(1, 9, size=(4, 5)).astype(float)
        theta = rng.normal(size=(4, 5))
        x = rng.binomial(trials.astype(int), special.expit(theta)).astype(float)
        terms = log_density_terms(
            "binomial", x, theta, DistributionSpec.binomial(trials)
        )
        expected = stats.binom.logpmf(x, trials, special.expit(theta))
        np.testing.assert_allclose(terms, expected, atol=1e-10)

        counts = rng.poisson(3.0, size=10).astype(float)
        lam = rng.normal(size=10)
        np.testing.assert_allclose(
            log_density_terms("poisson", counts, lam),
            stats.poisson.logpmf(counts, np.exp(lam)),
            atol=1e-10,
        )

    @pytest.mark.parametrize("x", [3.0, 1.5, -1.0])
    def test_binomial_support_violations(self, x):
        spec = DistributionSpec.binomial(np.array([2.0]))
        with pytest.raises(DomainError):
            log_density(Family.BINOMIAL, np.array([x]), np.array([0.0]), spec)


class TestDistributionSpec:
    def test_normal_requires_positive_dispersion(self):
        with pytest.raises(DomainError):
            DistributionSpec.normal(0.0)

    def test_binomial_requires_trials(self):
        with pytest.raises(DomainError):
            DistributionSpec(Family.BINOMIAL)

    def test_fixed_dispersion_families(self):
        with pytest.raises(DomainError):
            DistributionSpec(Family.POISSON, dispersion=2.0)
        with pytest.raises(DomainError):
            DistributionSpec(Family.POISSON, trials=np.ones(2))
        assert Family.BINOMIAL.has_fixed_dispersion
        assert not Family.NORMAL.has_fixed_dispersion

    def test_trials_must_be_integer(self):
        with pytest.raises(DomainError):
            DistributionSpec.binomial(np.array([1.5]))

    def test_transposed_and_base_weights(self):
        trials = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        spec = DistributionSpec.binomial(trials)
        np.testing.assert_array_equal(spec.transposed().trials, trials.T)
        np.testing.assert_array_equal(spec.base_weights(trials.shape), trials)
        np.testing.assert_array_equal(
            DistributionSpec.normal(2.0).base_weights((2, 2)), np.ones((2, 2))
        )
        assert spec.to_dict() == {"family": "binomial", "dispersion": 1.0}
