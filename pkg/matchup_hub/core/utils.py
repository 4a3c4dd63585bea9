"""Вспомогательные функции."""

from __future__ import annotations

import hashlib
from typing import Iterable

import numpy as np

CLIP_BOUNDS = (0.001, 0.999)


def clip_probabilities(
    p_hat: np.ndarray, bounds: tuple[float, float] = CLIP_BOUNDS
) -> np.ndarray:
    """
    Ограничить вероятности отрезком [lower, upper].

    Args:
        p_hat: Матрица оценок
        bounds: Нижняя и верхняя границы, строго внутри (0, 1)

    Returns:
        Новая матрица с ограниченными значениями

    Raises:
        ValueError: Если границы некорректны
    """
    lower, upper = bounds
    if not 0 < lower < upper < 1:
        raise ValueError(f"Границы должны лежать строго внутри (0, 1): {bounds}")
    return np.clip(np.asarray(p_hat, dtype=float), lower, upper)


def pooled_margins(
    X: np.ndarray, N: np.ndarray, mask: np.ndarray
) -> tuple[np.ndarray, np.ndarray, float]:
    """
    Объединённые доли по строкам, столбцам и всей матрице.

    Доля строки: Σ успехов / Σ испытаний по наблюдаемым ячейкам строки.
    Строки и столбцы без наблюдений получают NaN.

    Args:
        X: Матрица успехов
        N: Матрица испытаний
        mask: Маска наблюдаемых ячеек

    Returns:
        Кортеж (доли строк, доли столбцов, общая доля)
    """
    mask = np.asarray(mask, dtype=bool)
    hits = np.where(mask, X, 0.0)
    trials = np.where(mask, N, 0.0)

    with np.errstate(divide="ignore", invalid="ignore"):
        rows = hits.sum(axis=1) / trials.sum(axis=1)
        cols = hits.sum(axis=0) / trials.sum(axis=0)
    total_trials = trials.sum()
    total = float(hits.sum() / total_trials) if total_trials > 0 else float("nan")
    return rows, cols, total


def stable_seed(*parts: Iterable | int | float | str) -> int:
    """
    Детерминированное зерно из набора значений (sha256, первые 8 байт).

    Не зависит от PYTHONHASHSEED и порядка запуска.
    """
    key = ":".join(str(part) for part in parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
