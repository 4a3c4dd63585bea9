"""
Гетерогенный IRLS: оценка коэффициентов при фиксированной матрице плана.

Отклик R (p×q): возможно, составная матрица из частей с разными
семействами. Для каждого столбца j решается взвешенная задача МНК

    C_j = (Dᵀ W_j D)⁻¹ Dᵀ W_j S_j,

где D (p×r): фиксированный фактор, S: индуцированный отклик, W_j:
квадраты весов IRLS столбца j. Итог: Θ = D Cᵀ. Решение для строк
(например, U по Z̃) получается тем же вызовом на транспонированном отклике.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from matchup_hub.core.exceptions import DimensionError, IrlsError
from matchup_hub.core.expfam import (
    Family,
    clamp_mean,
    inverse_link,
    link,
    mean_derivative,
    variance_fn,
)
from matchup_hub.core.models import Partition, StackedView

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-6
DEFAULT_MAX_ITER = 100
SINGULAR_CONDITION = 1e12
RIDGE_SCALE = 1e-8


@dataclass
class IrlsProblem:
    """
    Задача IRLS.

    Attributes:
        response: Составная матрица отклика с частями по семействам
        design: Фиксированный фактор p×r (U, V или их склейки)
        base_weights: Базовые веса w (по умолчанию 1; N в биномиальных частях)
        tolerance: Порог относительного изменения μ
        max_iter: Максимальное число итераций
        start_theta: Начальные натуральные параметры (тёплый старт)
    """

    response: StackedView
    design: np.ndarray
    base_weights: np.ndarray | None = None
    tolerance: float = DEFAULT_TOLERANCE
    max_iter: int = DEFAULT_MAX_ITER
    start_theta: np.ndarray | None = None

    def __post_init__(self) -> None:
        """Проверить согласованность размеров."""
        self.design = np.asarray(self.design, dtype=float)
        if self.design.ndim != 2:
            raise DimensionError("Матрица плана должна быть двумерной")
        if self.design.shape[0] != self.response.shape[0]:
            raise DimensionError(
                f"Матрица плана имеет {self.design.shape[0]} строк, "
                f"отклик: {self.response.shape[0]}"
            )
        if self.base_weights is None:
            self.base_weights = self.response.base_weights()
        else:
            self.base_weights = np.asarray(self.base_weights, dtype=float)
            if self.base_weights.shape != self.response.shape:
                raise DimensionError("Форма базовых весов не совпадает с откликом")
        if self.tolerance <= 0 or self.max_iter < 1:
            raise ValueError("tolerance > 0 и max_iter ≥ 1 обязательны")

    @property
    def partitions(self) -> tuple[Partition, ...]:
        """Части отклика."""
        return self.response.partitions


@dataclass
class IrlsSolution:
    """Результат IRLS: коэффициенты по столбцам отклика и подогнанные средние."""

    coefficients: np.ndarray
    mu_hat: np.ndarray
    theta: np.ndarray
    iterations: int
    converged: bool
    ridge_slices: int = 0
    objective_trace: list[np.ndarray] = field(default_factory=list)


def _working_scale(x: np.ndarray, part: Partition) -> np.ndarray:
    """Отклик в шкале среднего семейства (доля успехов для binomial)."""
    if part.spec.family is Family.BINOMIAL:
        return x / part.spec.trials
    return x


def init_mu(response: np.ndarray, partitions: Sequence[Partition]) -> np.ndarray:
    """
    Начальные средние μ = X с поправкой для биномиальных частей.

    Args:
        response: Матрица отклика
        partitions: Части отклика

    Returns:
        Матрица начальных средних: (x + 0.5) / (N + 1) для binomial,
        x + 0.1 для poisson, x для normal
    """
    response = np.asarray(response, dtype=float)
    mu = np.empty_like(response)
    for part in partitions:
        index = part.index()
        x = response[index]
        family = part.spec.family
        if family is Family.BINOMIAL:
            mu[index] = (x + 0.5) / (part.spec.trials + 1.0)
        elif family is Family.POISSON:
            mu[index] = x + 0.1
        else:
            mu[index] = x
    return mu


def induced_response(
    theta: np.ndarray,
    mu: np.ndarray,
    x: np.ndarray,
    partitions: Sequence[Partition],
) -> np.ndarray:
    """
    Индуцированный отклик S = θ + (x − μ) / (dμ/dθ).

    Args:
        theta: Текущие натуральные параметры
        mu: Текущие средние (зажатые внутри области определения)
        x: Данные (для binomial: счётчики)
        partitions: Части отклика

    Returns:
        Матрица S
    """
    S = np.empty_like(np.asarray(theta, dtype=float))
    for part in partitions:
        index = part.index()
        family = part.spec.family
        y = _working_scale(np.asarray(x, dtype=float)[index], part)
        S[index] = theta[index] + (y - mu[index]) / mean_derivative(family, mu[index])
    return S


def irls_weights(
    mu: np.ndarray,
    base_weights: np.ndarray,
    partitions: Sequence[Partition],
) -> np.ndarray:
    """
    Веса IRLS w̃ = sqrt(w · (dμ/dθ)² / Var(μ)).

    Для канонических связей это sqrt(w · μ(1 − μ)) для binomial,
    sqrt(w · μ) для poisson и sqrt(w / σ²) для normal.

    Args:
        mu: Текущие средние
        base_weights: Базовые веса w
        partitions: Части отклика

    Returns:
        Матрица w̃
    """
    weights = np.empty_like(np.asarray(mu, dtype=float))
    for part in partitions:
        index = part.index()
        family = part.spec.family
        derivative = mean_derivative(family, mu[index])
        variance = variance_fn(family, mu[index], part.spec.dispersion)
        weights[index] = np.sqrt(base_weights[index] * derivative**2 / variance)
    return weights


def _constrain(theta: np.ndarray, partitions: Sequence[Partition]) -> tuple:
    """Средние по частям с зажимом; θ пересчитывается из зажатых μ."""
    theta = np.array(theta, dtype=float)
    mu = np.empty_like(theta)
    for part in partitions:
        index = part.index()
        family = part.spec.family
        mu[index] = clamp_mean(family, inverse_link(family, theta[index]))
        if family is not Family.NORMAL:
            theta[index] = link(family, mu[index])
    return theta, mu


def _slice_objective(
    theta: np.ndarray,
    x: np.ndarray,
    base_weights: np.ndarray,
    partitions: Sequence[Partition],
) -> np.ndarray:
    """Ядро логарифма правдоподобия Σ w(yθ − b(θ))/φ по каждому столбцу."""
    terms = np.empty_like(theta)
    for part in partitions:
        index = part.index()
        family = part.spec.family
        y = _working_scale(x[index], part)
        t = theta[index]
        if family is Family.BINOMIAL:
            b = np.logaddexp(0.0, t)
        elif family is Family.POISSON:
            b = inverse_link(family, t)
        else:
            b = 0.5 * t**2
        terms[index] = base_weights[index] * (y * t - b) / part.spec.dispersion
    return terms.sum(axis=0)


def _weighted_solve(
    design: np.ndarray, squared_weights: np.ndarray, S: np.ndarray
) -> tuple[np.ndarray, int]:
    """
    Решить взвешенные нормальные уравнения для всех столбцов сразу.

    Вырожденные системы регуляризуются: λ = 1e−8 · trace / r.

    Returns:
        Кортеж (коэффициенты q×r, число регуляризованных столбцов)
    """
    rank = design.shape[1]
    gram = np.einsum("pr,pq,ps->qrs", design, squared_weights, design, optimize=True)
    rhs = np.einsum("pr,pq->qr", design, squared_weights * S, optimize=True)

    with np.errstate(divide="ignore", invalid="ignore"):
        condition = np.linalg.cond(gram)
    singular = ~np.isfinite(condition) | (condition > SINGULAR_CONDITION)
    if np.any(singular):
        trace = np.trace(gram, axis1=1, axis2=2)
        ridge = RIDGE_SCALE * trace / rank
        ridge = np.where(ridge > 0, ridge, RIDGE_SCALE)
        gram = gram.copy()
        gram[singular] += ridge[singular, None, None] * np.eye(rank)

    coefficients = np.linalg.solve(gram, rhs[..., None])[..., 0]
    return coefficients, int(singular.sum())


def solve_rows(problem: IrlsProblem) -> IrlsSolution:
    """
    Решить задачу IRLS для всех столбцов отклика.

    Итерации: индуцированный отклик → веса → взвешенный МНК по столбцам →
    обновление θ, пока max |Δμ| / (|μ| + 1e−8) не станет меньше tolerance
    или не будет исчерпан max_iter.

    Args:
        problem: Задача IRLS

    Returns:
        Решение с коэффициентами (q×r) и диагностикой

    Raises:
        IrlsError: Если веса содержат NaN
    """
    x = problem.response.data
    parts = problem.partitions
    design = problem.design
    base_weights = problem.base_weights

    if problem.start_theta is not None:
        theta, mu = _constrain(problem.start_theta, parts)
    else:
        mu = init_mu(x, parts)
        theta = np.empty_like(mu)
        for part in parts:
            index = part.index()
            theta[index] = link(part.spec.family, mu[index])

    # Веса normal-частей не зависят от μ: одно решение точное
    identity_only = all(p.spec.family is Family.NORMAL for p in parts)

    coefficients = np.zeros((x.shape[1], design.shape[1]))
    converged = False
    ridge_slices = 0
    objective_trace: list[np.ndarray] = []
    iteration = 0

    for iteration in range(1, problem.max_iter + 1):
        S = induced_response(theta, mu, x, parts)
        weights = irls_weights(mu, base_weights, parts)
        if np.any(np.isnan(weights)) or np.any(np.isnan(S)):
            raise IrlsError(f"NaN в весах IRLS на итерации {iteration}")

        coefficients, ridged = _weighted_solve(design, weights**2, S)
        ridge_slices = max(ridge_slices, ridged)
        theta, mu_new = _constrain(design @ coefficients.T, parts)

        change = float(
            np.max(np.abs(mu_new - mu) / (np.abs(mu) + 1e-8), initial=0.0)
        )
        mu = mu_new
        objective_trace.append(_slice_objective(theta, x, base_weights, parts))
        logger.debug(f"irls iteration={iteration} change={change:.3e}")

        if identity_only or change < problem.tolerance:
            converged = True
            break

    if ridge_slices:
        logger.warning(
            f"IRLS: {ridge_slices} вырожденных систем решены с ридж-регуляризацией"
        )
    if not converged:
        logger.warning(f"IRLS не сошёлся за {problem.max_iter} итераций")

    return IrlsSolution(
        coefficients=coefficients,
        mu_hat=mu,
        theta=theta,
        iterations=iteration,
        converged=converged,
        ridge_slices=ridge_slices,
        objective_trace=objective_trace,
    )
