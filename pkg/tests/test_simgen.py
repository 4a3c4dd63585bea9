"""Тесты генератора синтетических наборов и сетки экспериментов."""

import numpy as np
import pytest
from scipy.special import expit

from matchup_hub.core.exceptions import ConfigError
from matchup_hub.core.simgen import (
    GridSpec,
    SimulationConfig,
    cell_seed,
    generate,
    grid,
    illustrative_config,
)


class TestSimulationConfig:
    @pytest.mark.parametrize(
        "overrides",
        [
            {"sigma": 0.0},
            {"nmax": 0},
            {"rank": 0},
            {"dims": (10, 10, 5)},
            {"missing_fraction": 1.0},
            {"error_variance": -0.1},
        ],
    )
    def test_invalid_values(self, overrides):
        params = {"sigma": 0.3, "nmax": 2, "rank": 1} | overrides
        with pytest.raises(ConfigError):
            SimulationConfig(**params)

    def test_illustrative_settings(self):
        config = illustrative_config(seed=1)
        assert config.sigma == pytest.approx(0.4**0.5)
        assert (config.nmax, config.rank) == (8, 3)
        assert config.missing_fraction == 0.0
        assert config.dims == (200, 200, 50, 50)


class TestGenerate:
    def test_shapes_and_hidden_cells(self, small_simulation):
        dataset, truth = small_simulation
        assert dataset.dims == (20, 15, 6, 5)
        assert dataset.mask.sum() == 240
        assert truth.U.shape == (20, 2) and truth.V_z.shape == (5, 2)

    def test_counts_respect_trials(self, small_simulation):
        _, truth = small_simulation
        assert np.all(truth.X <= truth.N)
        assert truth.N.min() >= 1 and truth.N.max() <= 8
        np.testing.assert_array_equal(truth.X, np.floor(truth.X))

    def test_probabilities_follow_logit_link(self, small_simulation):
        _, truth = small_simulation
        np.testing.assert_allclose(truth.p_true, expit(truth.theta_X), atol=1e-15)
        np.testing.assert_allclose(truth.theta_Y, truth.U_y @ truth.V.T)
        np.testing.assert_allclose(truth.theta_Z, truth.U @ truth.V_z.T)

    def test_hidden_cells_are_placeholders(self, small_simulation):
        dataset, truth = small_simulation
        hidden = ~dataset.mask
        np.testing.assert_array_equal(dataset.X[hidden], 0.0)
        np.testing.assert_array_equal(dataset.N[hidden], 1.0)
        np.testing.assert_array_equal(dataset.X[~hidden], truth.X[~hidden])

    def test_same_seed_same_data(self, small_config):
        first, _ = generate(small_config)
        second, _ = generate(small_config)
        np.testing.assert_array_equal(first.X, second.X)
        np.testing.assert_array_equal(first.Y, second.Y)
        np.testing.assert_array_equal(first.mask, second.mask)

    def test_tiny_sigma_gives_even_odds(self):
        _, truth = generate(SimulationConfig(sigma=1e-4, nmax=2, rank=2, dims=(30, 30, 5, 5)))
        np.testing.assert_allclose(truth.p_true, 0.5, atol=1e-6)

    def test_sigma_controls_spread(self):
        dims = (60, 60, 10, 10)
        wide = generate(SimulationConfig(sigma=0.7, nmax=2, rank=2, dims=dims, seed=1))[1]
        narrow = generate(SimulationConfig(sigma=0.1, nmax=2, rank=2, dims=dims, seed=1))[1]
        assert wide.p_true.std() > 3 * narrow.p_true.std()

    def test_covariate_noise_variance(self):
        dataset, truth = generate(SimulationConfig(sigma=0.5, nmax=2, rank=2, seed=8))
        residual = np.asarray(dataset.Y) - truth.theta_Y
        assert abs(residual.var() - 0.09) < 0.09 * 0.05

    def test_no_missing_cells(self):
        dataset, _ = generate(
            SimulationConfig(sigma=0.3, nmax=4, rank=1, dims=(8, 6, 3, 3), missing_fraction=0.0)
        )
        assert dataset.mask.all()


class TestGrid:
    def test_default_grid_size(self):
        spec = GridSpec()
        assert spec.size == 144
        assert sum(1 for _ in grid(spec)) == 144

    @pytest.mark.parametrize(
        "spec, size",
        [
            (GridSpec(sigmas=(0.1, 0.7), nmaxes=(1, 16), ranks=(1, 2, 3), replicates=4), 48),
            (GridSpec(sigmas=(0.5,), nmaxes=(2, 8), ranks=(1, 2), replicates=2), 8),
            (GridSpec(sigmas=(0.1, 0.7), nmaxes=(8, 16), ranks=(2,), replicates=1), 4),
        ],
    )
    def test_sweep_sizes(self, spec, size):
        assert spec.size == size
        assert len(list(grid(spec))) == size

    def test_order_and_seeds(self):
        spec = GridSpec(sigmas=(0.1, 0.3), nmaxes=(2,), ranks=(1, 2), replicates=2)
        configs = list(grid(spec))
        assert [c.key["sigma"] for c in configs[:4]] == [0.1] * 4
        assert [(c.rank, c.replicate) for c in configs[:4]] == [(1, 0), (1, 1), (2, 0), (2, 1)]
        assert len({c.seed for c in configs}) == len(configs)
        assert configs[5].seed == cell_seed(2017, 1, 0, 1, 1)

    def test_cell_is_reproducible_alone(self):
        spec = GridSpec(sigmas=(0.3,), nmaxes=(4,), ranks=(2,), replicates=1, dims=(10, 8, 4, 4))
        (config,) = grid(spec)
        rebuilt = SimulationConfig(
            sigma=0.3, nmax=4, rank=2, dims=(10, 8, 4, 4), seed=cell_seed(2017, 0, 0, 2, 0)
        )
        np.testing.assert_array_equal(generate(config)[0].X, generate(rebuilt)[0].X)

    def test_master_seed_changes_cells(self):
        first = next(grid(GridSpec(master_seed=1)))
        second = next(grid(GridSpec(master_seed=2)))
        assert first.seed != second.seed

    def test_empty_grid_rejected(self):
        with pytest.raises(ConfigError):
            GridSpec(sigmas=())
        with pytest.raises(ConfigError):
            GridSpec(replicates=0)
