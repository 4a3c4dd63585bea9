"""
Метрики качества и экспериментальные стенды.

RMSE и биномиальное логарифмическое правдоподобие считаются по заданному
набору ячеек. Стенд симуляций прогоняет сетку σ × nmax × r × повторы,
стенд кросс-валидации прячет фолды наблюдаемых ячеек и оценивает
предсказания на них.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable, Iterable, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from matchup_hub.core.baselines import ALL_METHODS, Method
from matchup_hub.core.exceptions import DomainError, MatchupHubError
from matchup_hub.core.impute import ImputationConfig, impute
from matchup_hub.core.models import Factorization, LinkedDataset, reconstruct
from matchup_hub.core.simgen import GridSpec, SimulatedTruth, SimulationConfig, generate, grid
from matchup_hub.core.utils import CLIP_BOUNDS
from matchup_hub.decorators import log_action

logger = logging.getLogger(__name__)

METRICS = ("rmse", "log_lik", "log_lik_per_ab")


def _cells(shape: tuple[int, ...], cells: np.ndarray | None) -> np.ndarray:
    if cells is None:
        return np.ones(shape, dtype=bool)
    cells = np.asarray(cells, dtype=bool)
    if cells.shape != shape:
        raise ValueError(f"Форма набора ячеек {cells.shape} не совпадает с {shape}")
    return cells


def rmse(p_hat: np.ndarray, p_ref: np.ndarray, cells: np.ndarray | None = None) -> float:
    """
    Корень из среднего квадрата отклонения по ячейкам.

    Args:
        p_hat: Оценки
        p_ref: Эталон (истинные p или наблюдаемые доли x / N)
        cells: Маска ячеек (по умолчанию все)

    Returns:
        Значение RMSE

    Raises:
        ValueError: Если набор ячеек пуст
    """
    p_hat = np.asarray(p_hat, dtype=float)
    p_ref = np.asarray(p_ref, dtype=float)
    cells = _cells(p_hat.shape, cells)
    if not cells.any():
        raise ValueError("Пустой набор ячеек для RMSE")
    return float(np.sqrt(np.mean(np.square(p_hat[cells] - p_ref[cells]))))


def binom_log_lik(
    p_hat: np.ndarray,
    X: np.ndarray,
    N: np.ndarray,
    cells: np.ndarray | None = None,
) -> float:
    """
    Биномиальное логарифмическое правдоподобие с биномиальным коэффициентом.

    Σ log C(N, x) + x log p̂ + (N − x) log(1 − p̂) по ячейкам.

    Raises:
        DomainError: Если p̂ вне (0, 1) в выбранных ячейках
        ValueError: Если набор ячеек пуст
    """
    p_hat = np.asarray(p_hat, dtype=float)
    cells = _cells(p_hat.shape, cells)
    if not cells.any():
        raise ValueError("Пустой набор ячеек для правдоподобия")
    p = p_hat[cells]
    if np.any(~np.isfinite(p)) or np.any(p <= 0) or np.any(p >= 1):
        raise DomainError("binomial", "вероятности должны лежать строго в (0, 1)")
    x = np.asarray(X, dtype=float)[cells]
    n = np.asarray(N, dtype=float)[cells]
    return float(np.sum(stats.binom.logpmf(x, n, p)))


def binom_log_lik_per_ab(
    p_hat: np.ndarray,
    X: np.ndarray,
    N: np.ndarray,
    cells: np.ndarray | None = None,
) -> float:
    """Правдоподобие, делённое на Σ N по ячейкам (в расчёте на одно выступление)."""
    cells = _cells(np.shape(p_hat), cells)
    total = binom_log_lik(p_hat, X, N, cells)
    return total / float(np.sum(np.asarray(N, dtype=float)[cells]))


@dataclass
class MethodScore:
    """Оценка метода (и ранга) на одном наборе или сводная по фолдам."""

    method: Method
    rank: int | None
    rmse: float
    log_lik: float
    log_lik_per_ab: float
    converged_fraction: float = 1.0
    units: int = 1
    failed: int = 0

    def __post_init__(self) -> None:
        """Проверить неотрицательность RMSE."""
        if not np.isnan(self.rmse) and self.rmse < 0:
            raise ValueError("RMSE не может быть отрицательным")

    def to_dict(self) -> dict:
        """Плоская запись для таблиц."""
        return {
            "method": self.method.label,
            "rank": self.rank,
            "rmse": self.rmse,
            "log_lik": self.log_lik,
            "log_lik_per_ab": self.log_lik_per_ab,
            "converged_fraction": self.converged_fraction,
            "units": self.units,
            "failed": self.failed,
        }


def _execute(func: Callable[[Any], Any], items: Sequence[Any], jobs: int) -> list[Any]:
    """Выполнить func над items, сохраняя порядок; jobs > 1: в процессах."""
    if jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(func, items))


def _rank_units(methods: Iterable[Method], ranks: Iterable[int]) -> list[tuple[Method, int | None]]:
    units: list[tuple[Method, int | None]] = []
    for method in methods:
        if method.uses_rank:
            units.extend((method, int(rank)) for rank in ranks)
        else:
            units.append((method, None))
    return units


# --------------------------------------------------------------------------
# Кросс-валидация


@dataclass
class CvConfig:
    """Параметры кросс-валидации."""

    folds: int = 5
    seed: int = 2017
    ranks: tuple[int, ...] = (1, 2, 3)
    clip: tuple[float, float] = CLIP_BOUNDS
    methods: tuple[Method, ...] = ALL_METHODS
    jobs: int = 1
    impute: ImputationConfig | None = None

    def __post_init__(self) -> None:
        """Проверить параметры."""
        if self.folds < 2:
            raise ValueError(f"Число фолдов должно быть ≥ 2, получено {self.folds}")
        lower, upper = self.clip
        if not 0 < lower < upper < 1:
            raise ValueError(f"Границы должны лежать строго внутри (0, 1): {self.clip}")
        if not self.ranks or any(int(r) != r or r < 1 for r in self.ranks):
            raise ValueError(f"Ранги должны быть целыми ≥ 1: {self.ranks}")
        self.ranks = tuple(int(r) for r in self.ranks)
        self.methods = tuple(Method(m) for m in self.methods)
        if self.impute is None:
            self.impute = ImputationConfig(clip=self.clip)

    def to_dict(self) -> dict:
        """Словарь для манифеста."""
        return {
            "folds": self.folds,
            "seed": self.seed,
            "ranks": list(self.ranks),
            "clip": list(self.clip),
            "methods": [m.value for m in self.methods],
            "impute": self.impute.to_dict(),
        }


def cv_split(mask: np.ndarray, folds: int, seed: int) -> np.ndarray:
    """
    Разбить наблюдаемые ячейки на фолды.

    Наблюдаемые ячейки (в построчном порядке) случайно переставляются,
    и позиция k получает фолд k mod folds; размеры фолдов отличаются не
    более чем на 1.

    Args:
        mask: Маска наблюдаемых ячеек
        folds: Число фолдов
        seed: Зерно перестановки

    Returns:
        Матрица номеров фолдов той же формы; −1 у ненаблюдаемых ячеек

    Raises:
        ValueError: Если фолдов больше, чем наблюдаемых ячеек
    """
    mask = np.asarray(mask, dtype=bool)
    observed = np.flatnonzero(mask)
    if folds < 1 or folds > observed.size:
        raise ValueError(
            f"Число фолдов ({folds}) должно лежать в [1, {observed.size}]"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(observed.size)
    assignment = np.full(mask.size, -1, dtype=int)
    assignment[observed[order]] = np.arange(observed.size) % folds
    return assignment.reshape(mask.shape)


def _cv_unit(
    unit: tuple[int, Method, int | None],
    dataset: LinkedDataset,
    assignment: np.ndarray,
    config: ImputationConfig,
) -> dict:
    fold, method, rank = unit
    test = assignment == fold
    train = dataset.with_mask(dataset.mask & ~test)
    outcome = {"fold": fold, "method": method, "rank": rank}
    try:
        result = impute(train, method, rank, config)
    except (MatchupHubError, np.linalg.LinAlgError) as e:
        logger.warning(f"CV fold={fold} method={method.value} rank={rank} failed: {e}")
        outcome.update(
            predictions=None, converged=False, iterations=0, failure=f"{type(e).__name__}: {e}"
        )
        return outcome
    outcome.update(
        predictions=result.p_hat[test],
        converged=result.converged,
        iterations=result.iterations,
        failure=result.failure,
    )
    return outcome


@dataclass
class CvReport:
    """
    Результаты кросс-валидации.

    scores: сводные оценки по методам и рангам (предсказания всех фолдов
    объединяются, каждая наблюдаемая ячейка оценивается ровно один раз),
    folds: оценки по фолдам, pairs: наблюдаемые доли и предсказания для
    каждой отложенной ячейки.
    """

    scores: list[MethodScore]
    folds: pd.DataFrame
    pairs: pd.DataFrame
    fold_sizes: list[int]

    @property
    def failed_units(self) -> int:
        """Число неудавшихся подгонок (фолд × метод × ранг)."""
        return int(self.folds["failure"].notna().sum())

    def summary(self) -> pd.DataFrame:
        """Сводная таблица в длинном формате."""
        return pd.DataFrame([s.to_dict() for s in self.scores])

    def table(self) -> pd.DataFrame:
        """
        Таблица методы × ранги × {RMSE, log L}.

        Методы без ранга попадают в столбцы ранга 1.
        """
        ranks = sorted({s.rank for s in self.scores if s.rank is not None}) or [1]
        rows = []
        for method in dict.fromkeys(s.method for s in self.scores):
            row: dict[str, Any] = {"method": method.label}
            by_rank = {s.rank: s for s in self.scores if s.method is method}
            for metric in METRICS:
                for rank in ranks:
                    score = by_rank.get(rank if method.uses_rank else None)
                    if not method.uses_rank and rank != ranks[0]:
                        score = None
                    row[f"{metric}_r{rank}"] = getattr(score, metric) if score else np.nan
            rows.append(row)
        return pd.DataFrame(rows)


def _column(method: Method, rank: int | None) -> str:
    return method.value if rank is None else f"{method.value}_r{rank}"


@log_action("CV")
def run_cv(dataset: LinkedDataset, config: CvConfig | None = None) -> CvReport:
    """
    Кросс-валидация методов импутации на наблюдаемых ячейках X.

    Для каждого фолда его ячейки скрываются, каждый метод × ранг
    импутирует вероятности, и предсказания на скрытых ячейках
    сравниваются с наблюдаемыми долями x / N.

    Args:
        dataset: Связанный набор с биномиальным X
        config: Параметры

    Returns:
        Отчёт; сбои отдельных подгонок записываются, а не прерывают запуск
    """
    config = config or CvConfig()
    assignment = cv_split(dataset.mask, config.folds, config.seed)
    fold_sizes = [int(np.sum(assignment == k)) for k in range(config.folds)]
    logger.info(f"cv folds={config.folds} sizes={fold_sizes}")

    units = [
        (fold, method, rank)
        for fold in range(config.folds)
        for method, rank in _rank_units(config.methods, config.ranks)
    ]
    worker = partial(
        _cv_unit, dataset=dataset, assignment=assignment, config=config.impute
    )
    outcomes = _execute(worker, units, config.jobs)

    X, N = dataset.X, dataset.N
    observed = np.where(dataset.mask, X / N, np.nan)
    pooled = {unit[1:]: np.full(X.shape, np.nan) for unit in units}
    fold_rows = []

    for outcome in outcomes:
        fold, method, rank = outcome["fold"], outcome["method"], outcome["rank"]
        test = assignment == fold
        row = {
            "fold": fold,
            "method": method.label,
            "rank": rank,
            "cells": int(test.sum()),
            "at_bats": float(N[test].sum()),
            "converged": outcome["converged"],
            "iterations": outcome["iterations"],
            "failure": outcome["failure"],
        }
        predictions = outcome["predictions"]
        if predictions is not None:
            p_hat = np.full(X.shape, np.nan)
            p_hat[test] = predictions
            pooled[(method, rank)][test] = predictions
            row["rmse"] = rmse(p_hat, observed, test)
            row["log_lik"] = binom_log_lik(p_hat, X, N, test)
            row["log_lik_per_ab"] = row["log_lik"] / row["at_bats"]
        else:
            row.update(rmse=np.nan, log_lik=np.nan, log_lik_per_ab=np.nan)
        fold_rows.append(row)

    folds = pd.DataFrame(fold_rows)
    scores = []
    for method, rank in _rank_units(config.methods, config.ranks):
        p_hat = pooled[(method, rank)]
        covered = dataset.mask & np.isfinite(p_hat)
        mine = [o for o in outcomes if o["method"] is method and o["rank"] == rank]
        failed = sum(o["predictions"] is None for o in mine)
        converged = sum(bool(o["converged"]) for o in mine)
        if covered.any():
            total = binom_log_lik(p_hat, X, N, covered)
            score = MethodScore(
                method=method,
                rank=rank,
                rmse=rmse(p_hat, observed, covered),
                log_lik=total,
                log_lik_per_ab=total / float(N[covered].sum()),
                converged_fraction=converged / len(mine),
                units=len(mine),
                failed=failed,
            )
        else:
            score = MethodScore(method, rank, np.nan, np.nan, np.nan, 0.0, len(mine), failed)
        if failed:
            logger.warning(
                f"{method.label} rank={rank}: {failed} фолдов не удалось, "
                "оценка по оставшимся"
            )
        scores.append(score)

    test_cells = np.flatnonzero(assignment.ravel() >= 0)
    rows, cols = np.unravel_index(test_cells, X.shape)
    row_labels = dataset.row_labels or tuple(str(i) for i in range(X.shape[0]))
    col_labels = dataset.col_labels or tuple(str(j) for j in range(X.shape[1]))
    pairs = pd.DataFrame(
        {
            "fold": assignment.ravel()[test_cells],
            "batter_id": [row_labels[i] for i in rows],
            "pitcher_id": [col_labels[j] for j in cols],
            "at_bats": N.ravel()[test_cells],
            "hits": X.ravel()[test_cells],
            "observed": observed.ravel()[test_cells],
        }
    )
    for (method, rank), p_hat in pooled.items():
        pairs[f"pred_{_column(method, rank)}"] = p_hat.ravel()[test_cells]

    return CvReport(scores=scores, folds=folds, pairs=pairs, fold_sizes=fold_sizes)


# --------------------------------------------------------------------------
# Симуляции


def score_against_truth(
    p_hat: np.ndarray, truth: SimulatedTruth, cells: np.ndarray | None = None
) -> dict[str, float]:
    """
    Оценить импутацию по истинным параметрам.

    RMSE считается против p_true, правдоподобие: для полных X и N
    (включая скрытые значения) в указанных ячейках (по умолчанию пропуски).
    """
    cells = ~truth.mask if cells is None else np.asarray(cells, dtype=bool)
    total = binom_log_lik(p_hat, truth.X, truth.N, cells)
    return {
        "rmse": rmse(p_hat, truth.p_true, cells),
        "log_lik": total,
        "log_lik_per_ab": total / float(truth.N[cells].sum()),
    }


def _simulation_unit(
    cell: SimulationConfig,
    methods: tuple[Method, ...],
    config: ImputationConfig,
) -> list[dict]:
    dataset, truth = generate(cell)
    rows = []
    for method in methods:
        rank = cell.rank if method.uses_rank else None
        row = {**cell.key, "seed": cell.seed, "method": method.label, "method_rank": rank}
        try:
            result = impute(dataset, method, rank, config)
        except (MatchupHubError, np.linalg.LinAlgError) as e:
            logger.warning(f"simulation {cell.key} method={method.value} failed: {e}")
            row.update(
                rmse=np.nan,
                log_lik=np.nan,
                log_lik_per_ab=np.nan,
                converged=False,
                iterations=0,
                failure=f"{type(e).__name__}: {e}",
            )
        else:
            row.update(score_against_truth(result.p_hat, truth))
            row.update(
                converged=result.converged,
                iterations=result.iterations,
                failure=result.failure,
            )
        rows.append(row)
    return rows


_METHOD_ORDER = {m.label: position for position, m in enumerate(ALL_METHODS)}


@dataclass
class SimulationReport:
    """Оценки всех методов в каждой ячейке сетки и их сводки."""

    cells: pd.DataFrame
    spec: GridSpec
    methods: tuple[Method, ...] = field(default_factory=lambda: ALL_METHODS)

    @property
    def usable(self) -> pd.DataFrame:
        """Строки, попадающие в средние: сошедшиеся и без сбоев."""
        frame = self.cells
        return frame[frame["converged"].astype(bool) & frame["failure"].isna()]

    @property
    def failed_units(self) -> int:
        """Число подгонок со сбоем."""
        return int(self.cells["failure"].notna().sum())

    def aggregate(self) -> pd.DataFrame:
        """
        Средние по повторам для каждой (nmax, r, σ, метод).

        Несошедшиеся повторы исключаются из средних и помечаются flagged.
        """
        keys = ["nmax", "rank", "sigma", "method"]
        means = self.usable.groupby(keys, sort=False)[list(METRICS)].mean()
        used = self.usable.groupby(keys, sort=False).size().rename("replicates_used")
        total = self.cells.groupby(keys, sort=False).size().rename("replicates_total")
        frame = pd.concat([total, used, means], axis=1).reset_index()
        frame["replicates_used"] = frame["replicates_used"].fillna(0).astype(int)
        frame["flagged"] = frame["replicates_used"] < frame["replicates_total"]
        frame["order"] = frame["method"].map(_METHOD_ORDER)
        frame = frame.sort_values(["nmax", "rank", "sigma", "order"], kind="stable")
        return frame.drop(columns="order").reset_index(drop=True)

    def table(self, metric: str = "rmse", nmax: int | None = None) -> pd.DataFrame:
        """
        Таблица строки (r, σ) × столбцы методы при фиксированном nmax.

        Помеченные ячейки (часть повторов исключена) получают столбец
        flagged со списком методов.

        Args:
            metric: rmse, log_lik или log_lik_per_ab
            nmax: Значение nmax (по умолчанию наибольшее в сетке)
        """
        if metric not in METRICS:
            raise ValueError(f"Неизвестная метрика '{metric}'. Доступные: {', '.join(METRICS)}")
        nmax = max(self.spec.nmaxes) if nmax is None else nmax
        frame = self.aggregate()
        frame = frame[frame["nmax"] == nmax]
        labels = [m.label for m in self.methods]
        wide = frame.pivot(index=["rank", "sigma"], columns="method", values=metric)
        wide = wide.reindex(columns=[m for m in labels if m in wide.columns])
        flags = {
            key: ",".join(group["method"])
            for key, group in frame[frame["flagged"]].groupby(["rank", "sigma"])
        }
        wide["flagged"] = [flags.get(key, "") for key in wide.index]
        wide.columns.name = None
        return wide.reset_index()

    def marginals(self) -> pd.DataFrame:
        """
        Средние метрик по значениям одного параметра, усреднённые по двум другим.

        Длинный формат: parameter, value, method, metric, mean.
        """
        usable = self.usable
        parts = []
        for parameter in ("nmax", "sigma", "rank"):
            grouped = usable.groupby([parameter, "method"], sort=True)[list(METRICS)].mean()
            long = grouped.reset_index().melt(
                id_vars=[parameter, "method"], var_name="metric", value_name="mean"
            )
            long = long.rename(columns={parameter: "value"})
            long.insert(0, "parameter", parameter)
            parts.append(long)
        frame = pd.concat(parts, ignore_index=True)
        frame["order"] = frame["method"].map(_METHOD_ORDER)
        frame = frame.sort_values(["parameter", "metric", "value", "order"], kind="stable")
        return frame.drop(columns="order").reset_index(drop=True)


@log_action("SIMULATE")
def run_simulation_study(
    spec: GridSpec | None = None,
    methods: Iterable[Method] = ALL_METHODS,
    config: ImputationConfig | None = None,
    jobs: int = 1,
) -> SimulationReport:
    """
    Прогнать сетку симуляций всеми методами.

    В каждой ячейке сетки генерируется набор, каждый метод импутирует
    пропуски при ранге ячейки, оценки считаются по скрытым ячейкам
    против истинных p.

    Args:
        spec: Сетка (по умолчанию полная, 144 ячейки)
        methods: Методы
        config: Параметры импутации
        jobs: Число параллельных процессов

    Returns:
        Отчёт с построчными оценками; порядок строк не зависит от jobs
    """
    spec = spec or GridSpec()
    methods = tuple(Method(m) for m in methods)
    config = config or ImputationConfig()
    cells = list(grid(spec))
    logger.info(f"simulation cells={len(cells)} methods={[m.value for m in methods]}")

    worker = partial(_simulation_unit, methods=methods, config=config)
    rows = [row for chunk in _execute(worker, cells, jobs) for row in chunk]
    frame = pd.DataFrame(rows)
    frame["order"] = frame["method"].map(_METHOD_ORDER)
    frame = frame.sort_values(
        ["sigma", "nmax", "rank", "replicate", "order"], kind="stable"
    )
    frame = frame.drop(columns="order").reset_index(drop=True)
    return SimulationReport(cells=frame, spec=spec, methods=methods)


def recovery_correlations(
    truth: SimulatedTruth, factorization: Factorization
) -> dict[str, float]:
    """Корреляции Пирсона истинных и подогнанных p, μ_Y, μ_Z."""
    fitted = reconstruct(factorization)
    pairs = {
        "p": (truth.p_true, fitted.P),
        "mu_Y": (truth.mu_Y, fitted.mu_Y),
        "mu_Z": (truth.mu_Z, fitted.mu_Z),
    }
    return {
        name: float(stats.pearsonr(true.ravel(), estimate.ravel()).statistic)
        for name, (true, estimate) in pairs.items()
    }


# --------------------------------------------------------------------------
# Отчёты


@dataclass(frozen=True)
class Matchup:
    """Пара отбивающий-питчер с предсказанной вероятностью."""

    row: int
    col: int
    p_hat: float
    batter: str | None = None
    pitcher: str | None = None
    hits: float | None = None
    at_bats: float | None = None

    def to_dict(self) -> dict:
        """Плоская запись для таблиц."""
        return {
            "row": self.row,
            "col": self.col,
            "batter_id": self.batter,
            "pitcher_id": self.pitcher,
            "p_hat": self.p_hat,
            "hits": self.hits,
            "at_bats": self.at_bats,
        }


def favorable_matchups(
    p_hat: np.ndarray,
    k: int,
    row_labels: Sequence[str] | None = None,
    col_labels: Sequence[str] | None = None,
    X: np.ndarray | None = None,
    N: np.ndarray | None = None,
    mask: np.ndarray | None = None,
) -> list[Matchup]:
    """
    k пар с наибольшей предсказанной вероятностью.

    При равенстве раньше идёт меньший номер строки, затем столбца. Если
    k больше числа ячеек, возвращаются все.

    Args:
        p_hat: Матрица предсказаний
        k: Число пар (≥ 0)
        row_labels: Метки строк (отбивающие)
        col_labels: Метки столбцов (питчеры)
        X: Наблюдаемые успехи
        N: Наблюдаемые испытания
        mask: Маска наблюдений (без неё X и N показываются во всех ячейках)

    Returns:
        Список пар по убыванию p̂

    Raises:
        ValueError: Если k < 0
    """
    if k < 0:
        raise ValueError(f"k должно быть неотрицательным, получено {k}")
    p_hat = np.asarray(p_hat, dtype=float)
    order = np.argsort(-p_hat.ravel(), kind="stable")[:k]
    observed = None
    if X is not None and N is not None:
        observed = np.ones(p_hat.shape, dtype=bool) if mask is None else np.asarray(mask)

    result = []
    for flat in order:
        i, j = np.unravel_index(flat, p_hat.shape)
        i, j = int(i), int(j)
        seen = observed is not None and bool(observed[i, j])
        result.append(
            Matchup(
                row=i,
                col=j,
                p_hat=float(p_hat[i, j]),
                batter=row_labels[i] if row_labels is not None else None,
                pitcher=col_labels[j] if col_labels is not None else None,
                hits=float(X[i, j]) if seen else None,
                at_bats=float(N[i, j]) if seen else None,
            )
        )
    return result
