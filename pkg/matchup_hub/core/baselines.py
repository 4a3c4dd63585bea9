"""
Методы сравнения: среднее, log5, PCA, логистический PCA и LMF.

Вместе с GLMF образуют шесть методов импутации.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import linalg

from matchup_hub.core.exceptions import FitError, ImputationError
from matchup_hub.core.expfam import DistributionSpec, Family, inverse_link
from matchup_hub.core.glmf import (
    ComponentSolver,
    FitConfig,
    fit,
    working_surrogate,
)
from matchup_hub.core.models import Factorization, LinkedDataset, StackedView
from matchup_hub.core.utils import CLIP_BOUNDS, clip_probabilities, pooled_margins

logger = logging.getLogger(__name__)


class Method(str, Enum):
    """Методы импутации в порядке сводных таблиц."""

    GLMF = "glmf"
    LMF = "lmf"
    LPCA = "lpca"
    PCA = "pca"
    LOG5 = "log5"
    MEAN = "mean"

    @property
    def uses_rank(self) -> bool:
        """True для методов понижения размерности (с параметром ранга)."""
        return self not in (Method.LOG5, Method.MEAN)

    @property
    def label(self) -> str:
        """Подпись метода в таблицах."""
        return {
            Method.GLMF: "GLMF",
            Method.LMF: "LMF",
            Method.LPCA: "LPCA",
            Method.PCA: "PCA",
            Method.LOG5: "Log5",
            Method.MEAN: "Mean",
        }[self]


ALL_METHODS = tuple(Method)


def parse_methods(names: str | list[str] | None) -> tuple[Method, ...]:
    """
    Разобрать список методов ("glmf,lmf" или список строк).

    Raises:
        ValueError: Если метод неизвестен
    """
    if names is None:
        return ALL_METHODS
    if isinstance(names, str):
        names = [name for name in names.split(",") if name.strip()]
    methods = []
    for name in names:
        try:
            methods.append(Method(name.strip().lower()))
        except ValueError:
            valid = ", ".join(m.value for m in Method)
            raise ValueError(f"Неизвестный метод '{name}'. Доступные: {valid}")
    return tuple(dict.fromkeys(methods))


def mean_predict(X: np.ndarray, N: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """
    Общая средняя доля успехов во всех ячейках.

    Args:
        X: Матрица успехов
        N: Матрица испытаний
        mask: Маска наблюдаемых ячеек

    Returns:
        Постоянная матрица Σ X / Σ N по наблюдаемым ячейкам

    Raises:
        ImputationError: Если нет ни одной наблюдаемой ячейки
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ImputationError("Нет наблюдаемых ячеек для среднего")
    _, _, total = pooled_margins(X, N, mask)
    return np.full(mask.shape, total)


def log5_predict(
    B: np.ndarray,
    P: np.ndarray,
    T: float,
    bounds: tuple[float, float] = CLIP_BOUNDS,
) -> np.ndarray:
    """
    Оценка log5: p̂_ij = P_j · B_i / T с ограничением.

    Args:
        B: Средние отбивающих (строки)
        P: Средние питчеров (столбцы)
        T: Средняя по лиге
        bounds: Границы ограничения

    Returns:
        Матрица оценок

    Raises:
        ValueError: Если T ≤ 0
    """
    if not T > 0:
        raise ValueError(f"Средняя по лиге должна быть положительной, получено {T}")
    B = np.asarray(B, dtype=float)
    P = np.asarray(P, dtype=float)
    return clip_probabilities(np.outer(B, P) / T, bounds)


def log5_from_counts(
    X: np.ndarray,
    N: np.ndarray,
    mask: np.ndarray,
    bounds: tuple[float, float] = CLIP_BOUNDS,
) -> np.ndarray:
    """
    log5 по наблюдаемым данным; пустые строки и столбцы получают T.

    Raises:
        ImputationError: Если нет наблюдаемых ячеек
    """
    rows, cols, total = pooled_margins(X, N, mask)
    if not np.isfinite(total) or total <= 0:
        raise ImputationError("Нет наблюдаемых испытаний для log5")
    rows = np.where(np.isfinite(rows), rows, total)
    cols = np.where(np.isfinite(cols), cols, total)
    return log5_predict(rows, cols, total, bounds)


def pca_impute_step(p_hat: np.ndarray, rank: int) -> np.ndarray:
    """
    Реконструкция ранга r по SVD центрированной и нормированной матрицы.

    Столбцы (питчеры) центрируются и делятся на стандартное отклонение;
    для постоянных столбцов масштаб равен 1.

    Args:
        p_hat: Полностью заполненная матрица вероятностей
        rank: Ранг реконструкции

    Returns:
        Реконструкция в шкале вероятностей (без ограничения)

    Raises:
        FitError: Если ранг вне [1, min(m, n)]
    """
    p_hat = np.asarray(p_hat, dtype=float)
    if rank < 1 or rank > min(p_hat.shape):
        raise FitError(f"Ранг PCA должен лежать в [1, {min(p_hat.shape)}]")

    center = p_hat.mean(axis=0)
    if p_hat.shape[0] > 1:
        scale = p_hat.std(axis=0, ddof=1)
    else:
        scale = np.ones(p_hat.shape[1])
    scale = np.where(np.isfinite(scale) & (scale > 0), scale, 1.0)

    standardized = (p_hat - center) / scale
    u, s, vt = linalg.svd(standardized, full_matrices=False)
    approx = (u[:, :rank] * s[:rank]) @ vt[:rank]
    return approx * scale + center


@dataclass
class LpcaResult:
    """Результат логистического PCA: Θ̂ = U Vᵀ и p̂ = logit⁻¹(Θ̂)."""

    U: np.ndarray
    V: np.ndarray
    converged: bool
    iterations: int
    trace: list[float] = field(default_factory=list)

    @property
    def theta(self) -> np.ndarray:
        """Натуральные параметры."""
        return self.U @ self.V.T

    @property
    def p_hat(self) -> np.ndarray:
        """Вероятности в (0, 1)."""
        return inverse_link(Family.BINOMIAL, self.theta)


def lpca_fit(
    X: np.ndarray,
    N: np.ndarray,
    rank: int,
    config: FitConfig | None = None,
    warm_start: LpcaResult | None = None,
) -> LpcaResult:
    """
    Логистический (биномиальный экспоненциальный) PCA.

    Чередует IRLS для U по Xᵀ и для V по X, максимизируя биномиальное
    правдоподобие X при Θ = U Vᵀ. Старт: правые сингулярные векторы
    эмпирических логитов.

    Args:
        X: Матрица успехов (допускаются дробные псевдо-счётчики)
        N: Матрица испытаний
        rank: Ранг
        config: Пороги сходимости (ранг берётся из аргумента rank)
        warm_start: Предыдущий результат того же размера

    Returns:
        Результат с флагом сходимости

    Raises:
        FitError: Если ранг недопустим
    """
    X = np.asarray(X, dtype=float)
    config = config or FitConfig(rank=rank)
    if config.rank != rank:
        config = FitConfig(**{**config.to_dict(), "rank": rank})
    if rank > min(X.shape):
        raise FitError(f"Ранг {rank} превышает min{X.shape}")

    spec = DistributionSpec.binomial(N)
    view = StackedView.single(X, spec)
    solve = ComponentSolver(config)

    if warm_start is not None:
        U, V = warm_start.U.copy(), warm_start.V.copy()
    else:
        _, _, vt = linalg.svd(working_surrogate(X, spec), full_matrices=False)
        U, V = None, vt[:rank].T.copy()

    trace: list[float] = []
    previous = None
    converged = False
    iteration = 0
    for iteration in range(1, config.max_outer_iter + 1):
        U = solve(view.transposed(), V, U)
        V = solve(view, U, V)
        p_hat = inverse_link(Family.BINOMIAL, U @ V.T)
        if previous is not None:
            change = float(
                np.linalg.norm(p_hat - previous) / (np.linalg.norm(previous) + 1e-8)
            )
            trace.append(change)
            if change < config.outer_tolerance:
                converged = True
                break
        previous = p_hat

    if not converged:
        logger.warning(f"LPCA ранга {rank} не сошёлся за {config.max_outer_iter} итераций")
    return LpcaResult(U=U, V=V, converged=converged, iterations=iteration, trace=trace)


def lmf_fit(
    dataset: LinkedDataset,
    rank: int,
    p_hat: np.ndarray | None = None,
    config: FitConfig | None = None,
    warm_start: Factorization | None = None,
) -> Factorization:
    """
    LMF: гауссов частный случай GLMF.

    Биномиальный блок заменяется матрицей вероятностей p̂ (по умолчанию:
    эмпирическими долями), после чего выполняется подгонка GLMF с
    гауссовым X.

    Args:
        dataset: Связанный набор данных
        rank: Ранг
        p_hat: Текущие оценки вероятностей для X
        config: Параметры подгонки
        warm_start: Предыдущая LMF-факторизация

    Returns:
        Факторизация той же формы, что и у GLMF
    """
    config = config or FitConfig(rank=rank)
    if config.rank != rank:
        config = FitConfig(**{**config.to_dict(), "rank": rank})
    if dataset.x_is_binomial:
        values = dataset.proportions() if p_hat is None else p_hat
        dataset = dataset.as_gaussian(values)
    elif p_hat is not None:
        dataset = dataset.as_gaussian(p_hat)
    return fit(dataset, config, warm_start=warm_start)
