"""Общие фикстуры тестов."""

import numpy as np
import pytest

from matchup_hub.core.models import LinkedDataset
from matchup_hub.core.simgen import SimulationConfig, generate


@pytest.fixture
def rng() -> np.random.Generator:
    """Генератор с фиксированным зерном."""
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_config() -> SimulationConfig:
    """Маленький синтетический набор: 20×15 X, 6×15 Y, 20×5 Z."""
    return SimulationConfig(
        sigma=0.5,
        nmax=8,
        rank=2,
        dims=(20, 15, 6, 5),
        missing_fraction=0.2,
        seed=7,
    )


@pytest.fixture(scope="session")
def small_simulation(small_config):
    """Пара (набор, истинные параметры) для small_config."""
    return generate(small_config)


@pytest.fixture
def small_dataset(small_simulation):
    """Набор с 20% пропусков."""
    return small_simulation[0]


@pytest.fixture
def small_truth(small_simulation):
    """Истинные параметры маленького набора."""
    return small_simulation[1]


def gaussian_dataset(rng: np.random.Generator, dims, rank: int, noise: float = 0.1):
    """Полностью гауссов связанный набор: низкий ранг плюс шум."""
    m1, n1, m2, n2 = dims
    U = rng.normal(size=(m1, rank))
    V = rng.normal(size=(n1, rank))
    U_y = rng.normal(size=(m2, rank))
    V_z = rng.normal(size=(n2, rank))
    return LinkedDataset(
        X=U @ V.T + noise * rng.normal(size=(m1, n1)),
        Y=U_y @ V.T + noise * rng.normal(size=(m2, n1)),
        Z=U @ V_z.T + noise * rng.normal(size=(m1, n2)),
    )


@pytest.fixture
def make_gaussian():
    """Фабрика гауссовых наборов: make_gaussian(rng, dims, rank, noise)."""
    return gaussian_dataset
