"""Тесты методов сравнения."""

import numpy as np
import pytest
from scipy.special import expit

from matchup_hub.core.baselines import (
    ALL_METHODS,
    Method,
    lmf_fit,
    log5_from_counts,
    log5_predict,
    lpca_fit,
    mean_predict,
    parse_methods,
    pca_impute_step,
)
from matchup_hub.core.exceptions import FitError, ImputationError
from matchup_hub.core.expfam import Family
from matchup_hub.core.glmf import FitConfig, fit


class TestParseMethods:
    def test_defaults_to_all_six(self):
        assert parse_methods(None) == ALL_METHODS
        assert len(ALL_METHODS) == 6

    def test_parses_comma_list_case_insensitive(self):
        assert parse_methods("glmf, LMF,glmf") == (Method.GLMF, Method.LMF)

    def test_unknown_method(self):
        with pytest.raises(ValueError, match="knn"):
            parse_methods("glmf,knn")

    def test_rank_usage(self):
        assert Method.LPCA.uses_rank
        assert not Method.LOG5.uses_rank
        assert Method.LOG5.label == "Log5"


class TestMean:
    def test_single_cell(self):
        mask = np.zeros((3, 2), dtype=bool)
        mask[1, 0] = True
        X = np.zeros((3, 2))
        X[1, 0] = 1.0
        N = np.full((3, 2), 4.0)
        np.testing.assert_array_equal(mean_predict(X, N, mask), 0.25)

    def test_pooled_proportion(self):
        X = np.array([[1.0, 0.0]])
        N = np.array([[2.0, 2.0]])
        p_hat = mean_predict(X, N, np.ones((1, 2), dtype=bool))
        np.testing.assert_array_equal(p_hat, 0.25)

    def test_empty_mask(self):
        with pytest.raises(ImputationError):
            mean_predict(np.zeros((2, 2)), np.ones((2, 2)), np.zeros((2, 2), dtype=bool))


class TestLog5:
    def test_formula(self):
        assert log5_predict(np.array([0.3]), np.array([0.2]), 0.25)[0, 0] == pytest.approx(0.24)

    def test_fixed_point(self):
        assert log5_predict(np.array([0.27]), np.array([0.27]), 0.27)[0, 0] == pytest.approx(0.27)

    def test_unbounded_estimate_is_clipped(self):
        assert log5_predict(np.array([0.9]), np.array([0.9]), 0.2)[0, 0] == 0.999

    def test_scale_consistency(self):
        B = np.array([0.2, 0.3])
        P = np.array([0.25, 0.3])
        base = log5_predict(B, P, 0.25)
        scaled = log5_predict(1.5 * B, 1.5 * P, 1.5 * 0.25)
        np.testing.assert_allclose(scaled, 1.5 * base, rtol=1e-12)

    def test_league_average_must_be_positive(self):
        with pytest.raises(ValueError):
            log5_predict(np.array([0.2]), np.array([0.2]), 0.0)

    def test_empty_margins_fall_back_to_league_average(self):
        X = np.array([[1.0, 2.0], [0.0, 0.0]])
        N = np.array([[4.0, 4.0], [1.0, 1.0]])
        mask = np.array([[True, True], [False, False]])
        p_hat = log5_from_counts(X, N, mask)
        # T = 3/8, строка 1 пустая: p̂ = T · P_j / T = P_j
        np.testing.assert_allclose(p_hat[1], [0.25, 0.5])
        np.testing.assert_allclose(p_hat[0], [0.25, 0.5])


class TestPca:
    def test_rank_one_matrix_is_exact(self, rng):
        p = np.outer(rng.uniform(0.2, 0.4, size=8), rng.uniform(0.5, 1.0, size=6))
        np.testing.assert_allclose(pca_impute_step(p, 1), p, atol=1e-10)

    def test_full_rank_is_identity(self, rng):
        p = rng.uniform(0.1, 0.4, size=(7, 5))
        np.testing.assert_allclose(pca_impute_step(p, 5), p, atol=1e-8)

    def test_constant_column_unchanged(self, rng):
        p = rng.uniform(0.1, 0.4, size=(6, 4))
        p[:, 2] = 0.3
        np.testing.assert_allclose(pca_impute_step(p, 1)[:, 2], 0.3, atol=1e-12)

    @pytest.mark.parametrize("rank", [0, 6])
    def test_rank_range(self, rank):
        with pytest.raises(FitError):
            pca_impute_step(np.full((5, 5), 0.2), rank)


class TestLpca:
    def test_even_proportions_give_zero_logits(self):
        N = np.full((6, 5), 2.0)
        result = lpca_fit(N / 2, N, 1)
        np.testing.assert_allclose(result.p_hat, 0.5, atol=1e-8)

    def test_recovers_planted_rank_one(self):
        rng = np.random.default_rng(11)
        theta = np.outer(rng.normal(size=40), rng.normal(size=30))
        N = np.full(theta.shape, 50.0)
        X = rng.binomial(50, expit(theta)).astype(float)
        result = lpca_fit(X, N, 1)
        assert np.corrcoef(result.p_hat.ravel(), expit(theta).ravel())[0, 1] >= 0.95
        assert np.all((result.p_hat > 0) & (result.p_hat < 1))

    def test_rank_above_dimensions(self):
        with pytest.raises(FitError):
            lpca_fit(np.zeros((3, 2)), np.ones((3, 2)), 3)


class TestLmf:
    def test_equals_glmf_on_gaussian_data(self, rng, make_gaussian):
        dataset = make_gaussian(rng, (12, 10, 5, 4), 2)
        direct = fit(dataset, FitConfig(rank=2))
        via_lmf = lmf_fit(dataset, 2)
        np.testing.assert_allclose(via_lmf.theta_X, direct.theta_X, atol=1e-10)
        np.testing.assert_allclose(via_lmf.theta_Y, direct.theta_Y, atol=1e-10)

    def test_binomial_block_replaced_by_probabilities(self, small_dataset):
        p_hat = np.full(small_dataset.X.shape, 0.25)
        factorization = lmf_fit(small_dataset, 1, p_hat=p_hat)
        assert factorization.x_family is Family.NORMAL
        assert factorization.sigma2_X is not None
        assert factorization.dims == small_dataset.dims

    def test_exact_low_rank_recovery(self, rng, make_gaussian):
        dataset = make_gaussian(rng, (15, 12, 6, 5), 2, noise=0.0)
        factorization = lmf_fit(dataset, 2)
        error = np.linalg.norm(factorization.theta_X - dataset.X) / np.linalg.norm(dataset.X)
        assert error < 1e-3
