"""
Ядра экспоненциальных семейств.

Каждое семейство задаётся плотностью вида h(x)·exp{xθ − b(θ)}:

    семейство   μ = b'(θ)           канонический link    Var = b''(θ)
    normal      θ                   identity             σ²
    binomial    e^θ / (1 + e^θ)     logit                μ(1 − μ)
    poisson     e^θ                 log                  μ

Биномиальные данные внутри решателей хранятся в шкале доли успехов
(x / N) с базовым весом N; шкала счётчиков используется только при
вычислении правдоподобия.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import special

from matchup_hub.core.exceptions import DomainError

# За пределами |θ| > 30 логистическая функция отличается от предела < 1e-13
THETA_SATURATION = 30.0

# Зажим среднего внутри итераций IRLS
MEAN_CLAMP = 1e-6


class Family(str, Enum):
    """Поддерживаемые экспоненциальные семейства."""

    NORMAL = "normal"
    BINOMIAL = "binomial"
    POISSON = "poisson"

    @property
    def canonical_link(self) -> str:
        """Имя канонической функции связи."""
        return {
            Family.NORMAL: "identity",
            Family.BINOMIAL: "logit",
            Family.POISSON: "log",
        }[self]

    @property
    def has_fixed_dispersion(self) -> bool:
        """True, если параметр рассеяния фиксирован и равен 1."""
        return self is not Family.NORMAL


@dataclass(frozen=True, eq=False)
class DistributionSpec:
    """
    Описание распределения блока или части матрицы.

    Инварианты:
    - dispersion > 0 для normal; 1 для binomial и poisson
    - trials задан тогда и только тогда, когда family = binomial
    """

    family: Family
    dispersion: float = 1.0
    trials: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        """Проверить инварианты описания."""
        object.__setattr__(self, "family", Family(self.family))

        if self.family is Family.NORMAL:
            if not np.isfinite(self.dispersion) or self.dispersion <= 0:
                raise DomainError(
                    self.family.value,
                    f"дисперсия должна быть положительной, получено {self.dispersion}",
                )
        elif self.dispersion != 1.0:
            raise DomainError(
                self.family.value, "параметр рассеяния фиксирован и равен 1"
            )

        if self.family is Family.BINOMIAL:
            if self.trials is None:
                raise DomainError("binomial", "не задана матрица числа испытаний N")
            trials = np.asarray(self.trials, dtype=float)
            if not np.all(np.isfinite(trials)) or np.any(trials < 0):
                raise DomainError("binomial", "N должно быть неотрицательным")
            if np.any(np.abs(trials - np.round(trials)) > 1e-9):
                raise DomainError("binomial", "N должно быть целым")
            object.__setattr__(self, "trials", trials)
        elif self.trials is not None:
            raise DomainError(
                self.family.value, "число испытаний задаётся только для binomial"
            )

    @classmethod
    def normal(cls, dispersion: float = 1.0) -> DistributionSpec:
        """Гауссово описание с дисперсией σ²."""
        return cls(Family.NORMAL, dispersion=float(dispersion))

    @classmethod
    def binomial(cls, trials: np.ndarray) -> DistributionSpec:
        """Биномиальное описание с матрицей числа испытаний."""
        return cls(Family.BINOMIAL, trials=np.asarray(trials, dtype=float))

    @classmethod
    def poisson(cls) -> DistributionSpec:
        """Пуассоновское описание."""
        return cls(Family.POISSON)

    def transposed(self) -> DistributionSpec:
        """Описание для транспонированного блока."""
        if self.trials is None:
            return self
        return replace(self, trials=self.trials.T)

    def with_dispersion(self, dispersion: float) -> DistributionSpec:
        """Копия с новой дисперсией (только для normal)."""
        return replace(self, dispersion=float(dispersion))

    def with_trials(self, trials: np.ndarray) -> DistributionSpec:
        """Копия с новой матрицей числа испытаний (только для binomial)."""
        return replace(self, trials=np.asarray(trials, dtype=float))

    def base_weights(self, shape: tuple[int, ...]) -> np.ndarray:
        """Базовые веса IRLS: N для биномиальных ячеек, 1 для остальных."""
        if self.trials is not None:
            return np.broadcast_to(self.trials, shape).astype(float)
        return np.ones(shape)

    def to_dict(self) -> dict:
        """Словарь для JSON (без матрицы испытаний)."""
        return {"family": self.family.value, "dispersion": self.dispersion}


def _as_family(family: Family | str | DistributionSpec) -> Family:
    if isinstance(family, DistributionSpec):
        return family.family
    return Family(family)


def link(family: Family | str, mu: np.ndarray) -> np.ndarray:
    """
    Каноническая функция связи g(μ).

    Args:
        family: Семейство распределения
        mu: Матрица средних в шкале семейства

    Returns:
        Матрица натуральных параметров θ

    Raises:
        DomainError: Если μ вне области определения (например, доля 0 или 1)
    """
    family = _as_family(family)
    mu = np.asarray(mu, dtype=float)

    if family is Family.NORMAL:
        return mu.copy()
    if family is Family.BINOMIAL:
        if np.any(~((mu > 0) & (mu < 1))):
            raise DomainError("binomial", "доля должна лежать строго внутри (0, 1)")
        return special.logit(mu)
    if np.any(~(mu > 0)):
        raise DomainError("poisson", "среднее должно быть положительным")
    return np.log(mu)


def inverse_link(family: Family | str, theta: np.ndarray) -> np.ndarray:
    """
    Обратная функция связи b'(θ) с насыщением экспоненты при |θ| > 30.

    Args:
        family: Семейство распределения
        theta: Матрица натуральных параметров

    Returns:
        Матрица средних
    """
    family = _as_family(family)
    theta = np.asarray(theta, dtype=float)

    if family is Family.NORMAL:
        return theta.copy()
    saturated = np.clip(theta, -THETA_SATURATION, THETA_SATURATION)
    if family is Family.BINOMIAL:
        return special.expit(saturated)
    return np.exp(saturated)


def mean_derivative(family: Family | str, mu: np.ndarray) -> np.ndarray:
    """Производная dμ/dθ, выраженная через μ (для канонических связей)."""
    family = _as_family(family)
    mu = np.asarray(mu, dtype=float)

    if family is Family.NORMAL:
        return np.ones_like(mu)
    if family is Family.BINOMIAL:
        return mu * (1.0 - mu)
    return mu.copy()


def variance_fn(
    family: Family | str, mu: np.ndarray, dispersion: float = 1.0
) -> np.ndarray:
    """
    Функция дисперсии Var(μ).

    Args:
        family: Семейство распределения
        mu: Матрица средних (для binomial: в шкале доли)
        dispersion: σ² для normal; игнорируется для остальных семейств

    Returns:
        Матрица дисперсий
    """
    family = _as_family(family)
    mu = np.asarray(mu, dtype=float)

    if family is Family.NORMAL:
        return np.full_like(mu, float(dispersion))
    return mean_derivative(family, mu)


def clamp_mean(family: Family | str, mu: np.ndarray) -> np.ndarray:
    """Зажать среднее внутри области определения: [ε, 1 − ε] или [ε, ∞)."""
    family = _as_family(family)
    if family is Family.BINOMIAL:
        return np.clip(mu, MEAN_CLAMP, 1.0 - MEAN_CLAMP)
    if family is Family.POISSON:
        return np.maximum(mu, MEAN_CLAMP)
    return mu


def _check_counts(family: Family, x: np.ndarray, upper: np.ndarray | None) -> None:
    if np.any(np.abs(x - np.round(x)) > 1e-9):
        raise DomainError(family.value, "наблюдения должны быть целыми")
    if np.any(x < 0):
        raise DomainError(family.value, "наблюдения должны быть неотрицательными")
    if upper is not None and np.any(x > upper):
        raise DomainError(family.value, "число успехов превышает число испытаний")


def log_density_terms(
    family: Family | str,
    x: np.ndarray,
    theta: np.ndarray,
    spec: DistributionSpec | None = None,
) -> np.ndarray:
    """
    Поэлементный логарифм плотности с нормирующим членом h(x).

    Args:
        family: Семейство распределения
        x: Наблюдения (для binomial: число успехов)
        theta: Натуральные параметры той же формы
        spec: Описание распределения (σ² для normal, N для binomial)

    Returns:
        Матрица log f(x | θ)

    Raises:
        DomainError: Если наблюдения вне носителя распределения
    """
    family = _as_family(family)
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)

    if family is Family.NORMAL:
        sigma2 = spec.dispersion if spec is not None else 1.0
        return -0.5 * np.log(2.0 * np.pi * sigma2) - (x - theta) ** 2 / (2.0 * sigma2)

    if family is Family.BINOMIAL:
        if spec is None or spec.trials is None:
            raise DomainError("binomial", "не задана матрица числа испытаний N")
        trials = np.broadcast_to(spec.trials, x.shape)
        _check_counts(family, x, trials)
        log_coef = (
            special.gammaln(trials + 1.0)
            - special.gammaln(x + 1.0)
            - special.gammaln(trials - x + 1.0)
        )
        saturated = np.clip(theta, -THETA_SATURATION, THETA_SATURATION)
        return (
            log_coef
            + x * special.log_expit(saturated)
            + (trials - x) * special.log_expit(-saturated)
        )

    _check_counts(family, x, None)
    saturated = np.clip(theta, -THETA_SATURATION, THETA_SATURATION)
    return x * saturated - np.exp(saturated) - special.gammaln(x + 1.0)


def log_density(
    family: Family | str,
    x: np.ndarray,
    theta: np.ndarray,
    spec: DistributionSpec | None = None,
) -> float:
    """Сумма log f(x | θ) по всем элементам."""
    return float(np.sum(log_density_terms(family, x, theta, spec)))
