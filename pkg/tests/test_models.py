"""Тесты связанной модели данных и факторизации."""

import numpy as np
import pytest

from matchup_hub.core.exceptions import DataValidationError, DimensionError
from matchup_hub.core.expfam import DistributionSpec, Family
from matchup_hub.core.models import (
    Factorization,
    LinkedDataset,
    Partition,
    StackedView,
    augment_cols,
    augment_rows,
    reconstruct,
)


def _binomial_dataset(rng, m1=2, n1=4, m2=3, n2=3):
    N = np.full((m1, n1), 2.0)
    X = rng.integers(0, 3, size=(m1, n1)).astype(float)
    return LinkedDataset(
        X=X,
        Y=rng.normal(size=(m2, n1)),
        Z=rng.normal(size=(m1, n2)),
        N=N,
    )


def _random_factorization(rng, dims=(6, 5, 3, 4), rank=2) -> Factorization:
    m1, n1, m2, n2 = dims
    return Factorization(
        U=rng.normal(size=(m1, rank)),
        V=rng.normal(size=(n1, rank)),
        U_y=rng.normal(size=(m2, rank)),
        V_z=rng.normal(size=(n2, rank)),
        rank=rank,
        sigma2_Y=0.2,
        sigma2_Z=0.3,
    )


class TestLinkedDataset:
    def test_dims_and_default_specs(self, rng):
        dataset = _binomial_dataset(rng)
        assert dataset.dims == (2, 4, 3, 3)
        assert dataset.x_is_binomial
        assert dataset.spec_Y.family is Family.NORMAL
        assert dataset.mask.all()

    def test_without_trials_x_is_gaussian(self, rng):
        dataset = LinkedDataset(
            X=rng.normal(size=(3, 4)), Y=rng.normal(size=(2, 4)), Z=rng.normal(size=(3, 2))
        )
        assert dataset.spec_X.family is Family.NORMAL

    @pytest.mark.parametrize(
        "y_shape, z_shape", [((3, 5), (2, 3)), ((3, 4), (3, 3))]
    )
    def test_block_shapes_must_agree(self, rng, y_shape, z_shape):
        with pytest.raises(DimensionError):
            LinkedDataset(
                X=np.zeros((2, 4)),
                Y=rng.normal(size=y_shape),
                Z=rng.normal(size=z_shape),
                N=np.ones((2, 4)),
            )

    def test_successes_cannot_exceed_trials(self, rng):
        with pytest.raises(DataValidationError):
            LinkedDataset(
                X=np.array([[3.0, 0.0]]),
                Y=rng.normal(size=(1, 2)),
                Z=rng.normal(size=(1, 1)),
                N=np.array([[2.0, 1.0]]),
            )

    def test_hidden_cells_are_not_validated(self, rng):
        dataset = LinkedDataset(
            X=np.array([[np.nan, 1.0]]),
            Y=rng.normal(size=(1, 2)),
            Z=rng.normal(size=(1, 1)),
            N=np.array([[np.nan, 1.0]]),
            mask=np.array([[False, True]]),
        )
        assert dataset.X[0, 0] == 0.0
        assert dataset.N[0, 0] == 1.0

    def test_rejects_missing_covariates_and_zero_trials(self, rng):
        Y = rng.normal(size=(1, 2))
        Y[0, 0] = np.nan
        with pytest.raises(DataValidationError):
            LinkedDataset(X=np.zeros((1, 2)), Y=Y, Z=np.zeros((1, 1)), N=np.ones((1, 2)))
        with pytest.raises(DataValidationError):
            LinkedDataset(
                X=np.zeros((1, 2)),
                Y=np.zeros((1, 2)),
                Z=np.zeros((1, 1)),
                N=np.array([[0.0, 1.0]]),
            )

    def test_blocks_are_read_only(self, rng):
        dataset = _binomial_dataset(rng)
        with pytest.raises(ValueError):
            dataset.X[0, 0] = 1.0

    def test_label_count_checked(self, rng):
        with pytest.raises(DimensionError):
            LinkedDataset(
                X=np.zeros((2, 2)),
                Y=np.zeros((1, 2)),
                Z=np.zeros((2, 1)),
                N=np.ones((2, 2)),
                row_labels=["a"],
            )

    def test_with_mask_hides_values(self, rng):
        dataset = _binomial_dataset(rng)
        mask = dataset.mask.copy()
        mask[0, 1] = False
        hidden = dataset.with_mask(mask)
        assert hidden.X[0, 1] == 0.0
        assert hidden.N[0, 1] == 1.0
        assert not hidden.mask[0, 1]
        np.testing.assert_array_equal(hidden.X[1], dataset.X[1])

    def test_with_filled_uses_pseudo_counts(self, small_dataset):
        p_hat = np.full(small_dataset.X.shape, 0.3)
        filled = small_dataset.with_filled(p_hat)
        missing = ~small_dataset.mask
        np.testing.assert_array_equal(filled.X[missing], 0.3)
        np.testing.assert_array_equal(filled.N[missing], 1.0)
        np.testing.assert_array_equal(filled.X[~missing], small_dataset.X[~missing])
        np.testing.assert_array_equal(filled.spec_X.trials, filled.N)
        np.testing.assert_array_equal(filled.mask, small_dataset.mask)

    def test_with_dispersions_only_touches_gaussian_blocks(self, small_dataset):
        updated = small_dataset.with_dispersions(0.5, 0.2, 0.3)
        assert updated.spec_X.family is Family.BINOMIAL
        assert updated.spec_Y.dispersion == 0.2
        assert updated.spec_Z.dispersion == 0.3


class TestStackedViews:
    def test_augment_rows_shape_and_boundary(self, rng):
        dataset = _binomial_dataset(rng, m1=2, n1=4, m2=3)
        view = augment_rows(dataset)
        assert view.shape == (5, 4)
        first, second = view.partitions
        assert (first.start, first.stop, second.stop) == (0, 2, 5)
        assert first.spec.family is Family.BINOMIAL
        np.testing.assert_array_equal(view.block(0), dataset.X)
        np.testing.assert_array_equal(view.block(1), dataset.Y)

    def test_augment_cols_shape_and_boundary(self, rng):
        dataset = _binomial_dataset(rng, m1=2, n1=4, n2=3)
        view = augment_cols(dataset)
        assert view.shape == (2, 7)
        np.testing.assert_array_equal(view.block(0), dataset.X)
        np.testing.assert_array_equal(view.block(1), dataset.Z)
        np.testing.assert_array_equal(view.base_weights()[:, :4], dataset.N)
        np.testing.assert_array_equal(view.base_weights()[:, 4:], 1.0)

    def test_all_gaussian_view_is_homogeneous(self, rng, make_gaussian):
        dataset = make_gaussian(rng, (4, 3, 2, 2), 1)
        families = {p.spec.family for p in augment_rows(dataset).partitions}
        assert families == {Family.NORMAL}
        families = {p.spec.family for p in augment_cols(dataset).partitions}
        assert families == {Family.NORMAL}

    def test_transposed_view(self, rng):
        view = augment_cols(_binomial_dataset(rng))
        flipped = view.transposed()
        assert flipped.shape == (7, 2)
        assert flipped.partitions[0].axis == 0
        np.testing.assert_array_equal(
            flipped.partitions[0].spec.trials, view.partitions[0].spec.trials.T
        )

    def test_partitions_must_cover_matrix(self):
        spec = DistributionSpec.normal()
        with pytest.raises(DimensionError):
            StackedView(np.zeros((4, 2)), (Partition(0, 0, 3, spec),))
        with pytest.raises(DimensionError):
            StackedView(
                np.zeros((4, 2)), (Partition(0, 0, 2, spec), Partition(0, 1, 4, spec))
            )


class TestFactorization:
    def test_zero_scores_give_even_odds(self, rng):
        factorization = _random_factorization(rng)
        factorization.U = np.zeros_like(factorization.U)
        np.testing.assert_array_equal(reconstruct(factorization).P, 0.5)

    def test_rank_one_outer_product(self, rng):
        u, v = rng.normal(size=(4, 1)), rng.normal(size=(3, 1))
        factorization = Factorization(
            U=u, V=v, U_y=np.ones((2, 1)), V_z=np.ones((2, 1)),
            rank=1, sigma2_Y=1.0, sigma2_Z=1.0,
        )
        recon = reconstruct(factorization)
        for i in range(4):
            for j in range(3):
                assert recon.theta_X[i, j] == pytest.approx(u[i, 0] * v[j, 0])
        assert np.all((recon.P > 0) & (recon.P < 1))
        np.testing.assert_array_equal(recon.mu_Y, recon.theta_Y)

    def test_reconstruction_is_deterministic(self, rng):
        factorization = _random_factorization(rng)
        first, second = reconstruct(factorization), reconstruct(factorization)
        for name in ("theta_X", "theta_Y", "theta_Z", "P"):
            np.testing.assert_array_equal(getattr(first, name), getattr(second, name))

    def test_reconstructions_invariant_to_gauge(self):
        rng = np.random.default_rng(2024)
        for _ in range(20):
            factorization = _random_factorization(rng, rank=3)
            G = rng.normal(size=(3, 3)) + 3.0 * np.eye(3)
            G_inv_t = np.linalg.inv(G).T
            moved = Factorization(
                U=factorization.U @ G,
                V=factorization.V @ G_inv_t,
                U_y=factorization.U_y @ G,
                V_z=factorization.V_z @ G_inv_t,
                rank=3,
                sigma2_Y=factorization.sigma2_Y,
                sigma2_Z=factorization.sigma2_Z,
            )
            for name in ("theta_X", "theta_Y", "theta_Z"):
                np.testing.assert_allclose(
                    getattr(moved, name), getattr(factorization, name), atol=1e-10
                )

    def test_dict_round_trip_keeps_reconstructions(self, rng):
        factorization = _random_factorization(rng)
        factorization.mu_trace = [0.1, 0.01]
        factorization.converged = True
        restored = Factorization.from_dict(factorization.to_dict())
        assert restored.dims == factorization.dims
        assert restored.converged and restored.mu_trace == [0.1, 0.01]
        np.testing.assert_array_equal(restored.theta_X, factorization.theta_X)
        assert restored.x_family is Family.BINOMIAL
        assert restored.sigma2_X is None
