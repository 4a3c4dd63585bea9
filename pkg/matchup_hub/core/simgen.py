"""
Генераторы синтетических связанных наборов.

Компоненты U, V, U_y, V_z ~ N(0, σ²); Θ_X = U Vᵀ, Θ_Y = U_y Vᵀ, Θ_Z = U V_zᵀ;
p = logit⁻¹(Θ_X); N ~ U{1..nmax}; X ~ Bin(N, p); Y, Z ~ N(Θ, ε²).
Доля ячеек X скрывается равномерно случайно.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from typing import Iterator

import numpy as np
from scipy.special import expit

from matchup_hub.core.exceptions import ConfigError
from matchup_hub.core.models import LinkedDataset
from matchup_hub.core.utils import stable_seed

DEFAULT_SIGMAS = (0.1, 0.3, 0.5, 0.7)
DEFAULT_NMAXES = (1, 2, 8, 16)
DEFAULT_RANKS = (1, 2, 3)
DEFAULT_DIMS = (200, 200, 50, 50)


@dataclass(frozen=True)
class SimulationConfig:
    """Параметры одного синтетического набора."""

    sigma: float
    nmax: int
    rank: int
    replicate: int = 0
    dims: tuple[int, int, int, int] = DEFAULT_DIMS
    error_variance: float = 0.09
    missing_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        """Проверить параметры."""
        if not self.sigma > 0:
            raise ConfigError(f"sigma должна быть положительной, получено {self.sigma}")
        if int(self.nmax) != self.nmax or self.nmax < 1:
            raise ConfigError(f"nmax должен быть целым ≥ 1, получено {self.nmax}")
        if int(self.rank) != self.rank or self.rank < 1:
            raise ConfigError(f"Ранг должен быть целым ≥ 1, получено {self.rank}")
        if len(self.dims) != 4 or any(int(d) != d or d < 1 for d in self.dims):
            raise ConfigError(f"Размеры должны быть четырьмя целыми ≥ 1: {self.dims}")
        if not self.error_variance > 0:
            raise ConfigError("Дисперсия ошибки должна быть положительной")
        if not 0 <= self.missing_fraction < 1:
            raise ConfigError("Доля пропусков должна лежать в [0, 1)")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def key(self) -> dict:
        """Координаты ячейки сетки."""
        return {
            "sigma": self.sigma,
            "nmax": int(self.nmax),
            "rank": int(self.rank),
            "replicate": int(self.replicate),
        }

    def to_dict(self) -> dict:
        """Словарь для манифеста."""
        data = asdict(self)
        data["dims"] = list(self.dims)
        return data


def illustrative_config(
    seed: int = 0, dims: tuple[int, int, int, int] = DEFAULT_DIMS
) -> SimulationConfig:
    """
    Набор для проверки восстановления параметров.

    Ранг 3, дисперсия компонент 0.4, N от 1 до 8, дисперсия ошибки 0.1,
    без пропусков.
    """
    return SimulationConfig(
        sigma=math.sqrt(0.4),
        nmax=8,
        rank=3,
        dims=dims,
        error_variance=0.1,
        missing_fraction=0.0,
        seed=seed,
    )


@dataclass
class SimulatedTruth:
    """Истинные параметры сгенерированного набора."""

    p_true: np.ndarray
    theta_X: np.ndarray
    theta_Y: np.ndarray
    theta_Z: np.ndarray
    U: np.ndarray
    V: np.ndarray
    U_y: np.ndarray
    V_z: np.ndarray
    X: np.ndarray
    N: np.ndarray
    mask: np.ndarray

    @property
    def mu_Y(self) -> np.ndarray:
        """Истинные средние Y."""
        return self.theta_Y

    @property
    def mu_Z(self) -> np.ndarray:
        """Истинные средние Z."""
        return self.theta_Z


def generate(config: SimulationConfig) -> tuple[LinkedDataset, SimulatedTruth]:
    """
    Сгенерировать связанный набор и его истинные параметры.

    Порядок выборок из генератора фиксирован, поэтому результат полностью
    определяется config.seed.

    Args:
        config: Параметры набора

    Returns:
        Кортеж (набор с маской, истинные параметры). Скрытые ячейки X в
        наборе заменены заглушками X = 0, N = 1; полные X и N: в truth.
    """
    m1, n1, m2, n2 = config.dims
    r = int(config.rank)
    rng = np.random.default_rng(config.seed)

    U = rng.normal(0.0, config.sigma, size=(m1, r))
    V = rng.normal(0.0, config.sigma, size=(n1, r))
    U_y = rng.normal(0.0, config.sigma, size=(m2, r))
    V_z = rng.normal(0.0, config.sigma, size=(n2, r))

    theta_X = U @ V.T
    theta_Y = U_y @ V.T
    theta_Z = U @ V_z.T
    p_true = expit(theta_X)

    N = rng.integers(1, int(config.nmax) + 1, size=(m1, n1)).astype(float)
    X = rng.binomial(N.astype(np.int64), p_true).astype(float)

    error_sd = math.sqrt(config.error_variance)
    Y = theta_Y + rng.normal(0.0, error_sd, size=theta_Y.shape)
    Z = theta_Z + rng.normal(0.0, error_sd, size=theta_Z.shape)

    cells = m1 * n1
    hidden = int(math.floor(config.missing_fraction * cells + 0.5))
    mask = np.ones(cells, dtype=bool)
    if hidden:
        mask[rng.choice(cells, size=hidden, replace=False)] = False
    mask = mask.reshape(m1, n1)

    dataset = LinkedDataset(
        X=np.where(mask, X, 0.0),
        Y=Y,
        Z=Z,
        N=np.where(mask, N, 1.0),
        mask=mask,
    )
    truth = SimulatedTruth(
        p_true=p_true,
        theta_X=theta_X,
        theta_Y=theta_Y,
        theta_Z=theta_Z,
        U=U,
        V=V,
        U_y=U_y,
        V_z=V_z,
        X=X,
        N=N,
        mask=mask,
    )
    return dataset, truth


@dataclass(frozen=True)
class GridSpec:
    """Сетка экспериментов σ × nmax × r × повторы."""

    sigmas: tuple[float, ...] = DEFAULT_SIGMAS
    nmaxes: tuple[int, ...] = DEFAULT_NMAXES
    ranks: tuple[int, ...] = DEFAULT_RANKS
    replicates: int = 3
    master_seed: int = 2017
    dims: tuple[int, int, int, int] = DEFAULT_DIMS
    error_variance: float = 0.09
    missing_fraction: float = 0.2

    def __post_init__(self) -> None:
        """Проверить, что сетка не пуста."""
        if not (self.sigmas and self.nmaxes and self.ranks):
            raise ConfigError("Сетка должна содержать хотя бы одно значение каждого параметра")
        if self.replicates < 1:
            raise ConfigError("Число повторов должно быть ≥ 1")
        for name in ("sigmas", "nmaxes", "ranks"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "dims", tuple(self.dims))

    @property
    def size(self) -> int:
        """Число ячеек сетки."""
        return len(self.sigmas) * len(self.nmaxes) * len(self.ranks) * self.replicates

    def to_dict(self) -> dict:
        """Словарь для манифеста."""
        return {
            "sigmas": list(self.sigmas),
            "nmaxes": list(self.nmaxes),
            "ranks": list(self.ranks),
            "replicates": self.replicates,
            "master_seed": self.master_seed,
            "dims": list(self.dims),
            "error_variance": self.error_variance,
            "missing_fraction": self.missing_fraction,
        }


def cell_seed(
    master_seed: int, sigma_index: int, nmax_index: int, rank: int, replicate: int
) -> int:
    """Зерно ячейки: sha256 от (master_seed, индексы σ и nmax, r, повтор)."""
    return stable_seed(master_seed, sigma_index, nmax_index, rank, replicate)


def grid(spec: GridSpec | None = None) -> Iterator[SimulationConfig]:
    """
    Перебрать все ячейки сетки.

    Каждая ячейка получает собственное зерно, поэтому любую из них можно
    воспроизвести отдельно.

    Args:
        spec: Описание сетки (по умолчанию 4·4·3·3 = 144 ячейки)

    Yields:
        Конфигурации наборов в порядке σ, nmax, r, повтор
    """
    spec = spec or GridSpec()
    for (i, sigma), (j, nmax), rank, replicate in itertools.product(
        enumerate(spec.sigmas),
        enumerate(spec.nmaxes),
        spec.ranks,
        range(spec.replicates),
    ):
        yield SimulationConfig(
            sigma=float(sigma),
            nmax=int(nmax),
            rank=int(rank),
            replicate=replicate,
            dims=spec.dims,
            error_variance=spec.error_variance,
            missing_fraction=spec.missing_fraction,
            seed=cell_seed(spec.master_seed, i, j, int(rank), replicate),
        )
