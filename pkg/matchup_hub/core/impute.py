"""
Итеративная импутация пропущенных вероятностей.

Цикл:
    1. пропуски инициализируются средним долей строки и столбца (N = 1);
    2. метод понижения размерности подгоняется к заполненным данным;
    3. пропуски заменяются подогнанными вероятностями;
    4. шаги 2-3 повторяются, пока изменение на пропусках не станет
       меньше порога.
mean и log5 не итеративны и считаются за один проход.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from matchup_hub.core.baselines import (
    LpcaResult,
    Method,
    lmf_fit,
    log5_from_counts,
    lpca_fit,
    mean_predict,
    pca_impute_step,
)
from matchup_hub.core.exceptions import FitError, ImputationError, IrlsError
from matchup_hub.core.glmf import FitConfig, fit
from matchup_hub.core.models import Factorization, LinkedDataset, reconstruct
from matchup_hub.core.utils import CLIP_BOUNDS, clip_probabilities, pooled_margins
from matchup_hub.decorators import log_action

logger = logging.getLogger(__name__)


@dataclass
class ImputationConfig:
    """Параметры цикла импутации и вложенных подгонок."""

    tolerance: float = 1e-4
    max_iter: int = 100
    clip: tuple[float, float] = CLIP_BOUNDS
    outer_tolerance: float = 1e-5
    max_outer_iter: int = 200
    inner_tolerance: float = 1e-6
    inner_max_iter: int = 100
    seed: int = 0
    init: str = "svd"
    warm_start: bool = True

    def __post_init__(self) -> None:
        """Проверить параметры."""
        if self.tolerance <= 0:
            raise ImputationError("Порог импутации должен быть положительным")
        if self.max_iter < 1:
            raise ImputationError("Число итераций импутации должно быть ≥ 1")
        lower, upper = self.clip
        if not 0 < lower < upper < 1:
            raise ImputationError(f"Границы должны лежать строго внутри (0, 1): {self.clip}")
        self.clip = (float(lower), float(upper))

    def fit_config(self, rank: int) -> FitConfig:
        """Параметры вложенной подгонки ранга rank."""
        return FitConfig(
            rank=rank,
            outer_tolerance=self.outer_tolerance,
            max_outer_iter=self.max_outer_iter,
            seed=self.seed,
            init=self.init,
            inner_tolerance=self.inner_tolerance,
            inner_max_iter=self.inner_max_iter,
        )

    def to_dict(self) -> dict:
        """Словарь для манифеста."""
        data = asdict(self)
        data["clip"] = list(self.clip)
        return data


@dataclass
class ImputationResult:
    """
    Результат импутации.

    p_hat определена во всех ячейках (и наблюдаемых тоже) и ограничена
    границами clip. trace: максимальное изменение p̂ на пропусках по
    итерациям. converged истинно, только если сошёлся и цикл, и вложенная
    подгонка, давшая итоговую p̂ (inner_converged). inner_nonconverged:
    число вложенных подгонок, остановленных по лимиту итераций.
    """

    p_hat: np.ndarray
    method: Method
    rank: int | None
    iterations: int
    converged: bool
    trace: list[float] = field(default_factory=list)
    factorization: Factorization | None = None
    failure: str | None = None
    inner_converged: bool = True
    inner_nonconverged: int = 0

    def to_dict(self) -> dict:
        """Диагностика в JSON-совместимом виде (без матрицы p̂)."""
        return {
            "method": self.method.value,
            "rank": self.rank,
            "iterations": self.iterations,
            "converged": self.converged,
            "inner_converged": self.inner_converged,
            "inner_nonconverged": self.inner_nonconverged,
            "trace": [float(v) for v in self.trace],
            "failure": self.failure,
            "shape": list(self.p_hat.shape),
        }


def initialize_missing(
    X: np.ndarray, N: np.ndarray, mask: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """
    Начальное заполнение пропусков.

    Пропуск (i, j) получает среднее объединённых долей строки i и столбца j.
    Если одна из них не определена, берётся другая, если обе: общая доля.
    Наблюдаемые ячейки сохраняют x / N, пропуски получают N = 1.

    Args:
        X: Матрица успехов
        N: Матрица испытаний
        mask: Маска наблюдаемых ячеек

    Returns:
        Кортеж (p̂⁰, скорректированная матрица N)

    Raises:
        ImputationError: Если наблюдаемых ячеек нет
    """
    X = np.asarray(X, dtype=float)
    N = np.asarray(N, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ImputationError("Матрица X полностью пропущена")

    rows, cols, total = pooled_margins(X, N, mask)
    row_part = np.broadcast_to(rows[:, None], X.shape)
    col_part = np.broadcast_to(cols[None, :], X.shape)
    both = (row_part + col_part) / 2.0
    fill = np.where(
        np.isfinite(both),
        both,
        np.where(
            np.isfinite(row_part),
            row_part,
            np.where(np.isfinite(col_part), col_part, total),
        ),
    )

    with np.errstate(divide="ignore", invalid="ignore"):
        observed = X / N
    p0 = np.where(mask, observed, fill)
    trials = np.where(mask, N, 1.0)
    return p0, trials


def _rank_limit(method: Method, dataset: LinkedDataset) -> int:
    m1, n1, m2, n2 = dataset.dims
    if method in (Method.GLMF, Method.LMF):
        return min(m1, n1, m2, n2)
    return min(m1, n1)


class _Step:
    """Одна подгонка метода по текущему заполнению; хранит тёплый старт."""

    def __init__(
        self,
        method: Method,
        dataset: LinkedDataset,
        rank: int,
        config: ImputationConfig,
        warm_start: Factorization | None,
    ):
        self.method = method
        self.dataset = dataset
        self.rank = rank
        self.config = config
        self.fit_config = config.fit_config(rank)
        self.state: Factorization | LpcaResult | None = warm_start
        self.factorization: Factorization | None = None
        self.calls = 0
        self.last_converged = True
        self.nonconverged = 0

    def __call__(self, working: np.ndarray) -> np.ndarray:
        # Явный тёплый старт используется в первой подгонке всегда
        previous = self.state if self.config.warm_start or self.calls == 0 else None
        self.calls += 1
        mask = self.dataset.mask

        if self.method is Method.PCA:
            self._record(True)
            return pca_impute_step(working, self.rank)

        if self.method is Method.LPCA:
            X = np.where(mask, self.dataset.X, working)
            N = np.where(mask, self.dataset.N, 1.0)
            result = lpca_fit(X, N, self.rank, self.fit_config, warm_start=previous)
            self.state = result
            self._record(result.converged)
            return result.p_hat

        if self.method is Method.GLMF:
            factorization = fit(
                self.dataset.with_filled(working),
                self.fit_config,
                warm_start=previous,
            )
        else:
            factorization = lmf_fit(
                self.dataset,
                self.rank,
                p_hat=working,
                config=self.fit_config,
                warm_start=previous,
            )
        self.state = factorization
        self.factorization = factorization
        self._record(factorization.converged)
        return reconstruct(factorization).P

    def _record(self, converged: bool) -> None:
        self.last_converged = bool(converged)
        if not converged:
            self.nonconverged += 1


@log_action("IMPUTE")
def impute(
    dataset: LinkedDataset,
    method: Method | str,
    rank: int | None = None,
    config: ImputationConfig | None = None,
    warm_start: Factorization | None = None,
) -> ImputationResult:
    """
    Импутировать вероятности успеха во всех ячейках X.

    GLMF и LPCA работают в шкале счётчиков (пропуски: псевдо-счётчики
    x = p̂ при N = 1), LMF и PCA: с матрицей вероятностей p̂.

    Args:
        dataset: Набор данных с биномиальным X и маской
        method: Метод импутации
        rank: Ранг (обязателен для glmf, lmf, lpca, pca)
        config: Параметры цикла
        warm_start: Факторизация для старта GLMF/LMF

    Returns:
        Результат; при сбое подгонки converged=False и последняя корректная p̂

    Raises:
        ImputationError: Если X не биномиальный или полностью пропущен
        FitError: Если ранг не задан или недопустим
    """
    method = Method(method)
    config = config or ImputationConfig()
    if not dataset.x_is_binomial:
        raise ImputationError("Импутация определена только для биномиального X")

    X, N, mask = dataset.X, dataset.N, dataset.mask
    if not mask.any():
        raise ImputationError("Матрица X полностью пропущена")

    if method is Method.MEAN:
        p_hat = mean_predict(X, N, mask)
        return ImputationResult(
            p_hat=clip_probabilities(p_hat, config.clip),
            method=method,
            rank=None,
            iterations=1,
            converged=True,
            trace=[0.0],
        )
    if method is Method.LOG5:
        return ImputationResult(
            p_hat=log5_from_counts(X, N, mask, config.clip),
            method=method,
            rank=None,
            iterations=1,
            converged=True,
            trace=[0.0],
        )

    if rank is None:
        raise FitError(f"Для метода {method.value} нужен ранг")
    limit = _rank_limit(method, dataset)
    if isinstance(rank, bool) or int(rank) != rank or not 1 <= rank <= limit:
        raise FitError(f"Ранг должен лежать в [1, {limit}], получено {rank}")
    rank = int(rank)
    if warm_start is not None and method not in (Method.GLMF, Method.LMF):
        logger.warning(f"Тёплый старт не используется методом {method.value}")
        warm_start = None

    missing = ~mask
    working, _ = initialize_missing(X, N, mask)
    step = _Step(method, dataset, rank, config, warm_start)

    fitted = working
    trace: list[float] = []
    converged = False
    failure = None
    iteration = 0

    for iteration in range(1, config.max_iter + 1):
        try:
            candidate = step(working)
        except (IrlsError, np.linalg.LinAlgError) as e:
            failure = f"{type(e).__name__}: {e}"
            logger.warning(
                f"Импутация {method.value} ранга {rank} прервана "
                f"на итерации {iteration}: {failure}"
            )
            iteration -= 1
            break
        if not np.all(np.isfinite(candidate)):
            failure = "нечисловые оценки"
            logger.warning(f"Импутация {method.value}: {failure} на итерации {iteration}")
            iteration -= 1
            break

        fitted = candidate
        if missing.any():
            change = float(np.max(np.abs(fitted[missing] - working[missing])))
        else:
            change = 0.0
        trace.append(change)
        logger.debug(f"impute method={method.value} iteration={iteration} change={change:.3e}")

        working = np.where(missing, fitted, working)
        if change < config.tolerance:
            converged = True
            break

    if not converged and failure is None:
        logger.warning(
            f"Импутация {method.value} ранга {rank} не сошлась "
            f"за {config.max_iter} итераций"
        )
    if converged and not step.last_converged:
        logger.warning(
            f"Импутация {method.value} ранга {rank}: последняя вложенная подгонка "
            f"не сошлась за {config.max_outer_iter} итераций"
        )

    return ImputationResult(
        p_hat=clip_probabilities(fitted, config.clip),
        method=method,
        rank=rank,
        iterations=iteration,
        converged=converged and step.last_converged,
        trace=trace,
        factorization=step.factorization,
        failure=failure,
        inner_converged=step.last_converged,
        inner_nonconverged=step.nonconverged,
    )
