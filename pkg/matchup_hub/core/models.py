"""Связанная модель данных (X, N, Y, Z) и факторизация."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from matchup_hub.core.exceptions import DataValidationError, DimensionError
from matchup_hub.core.expfam import DistributionSpec, Family, inverse_link


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


def _labels(values: Sequence | None, size: int, name: str) -> tuple[str, ...] | None:
    if values is None:
        return None
    labels = tuple(str(v) for v in values)
    if len(labels) != size:
        raise DimensionError(
            f"Число меток {name} ({len(labels)}) не совпадает с размером ({size})"
        )
    return labels


class LinkedDataset:
    """
    Двумерно связанный набор данных.

    X (m1×n1) делит столбцы с Y (m2×n1) и строки с Z (m1×n2).
    В бейсбольном контексте строки X: отбивающие, столбцы: питчеры,
    Y: статистика питчеров, Z: статистика отбивающих.

    Инварианты:
    - размеры блоков согласованы
    - 0 ≤ X ≤ N в наблюдаемых ячейках биномиального X, N ≥ 1 везде
    - Y и Z не содержат пропусков

    Экземпляр неизменяем после создания.
    """

    def __init__(
        self,
        X: np.ndarray,
        Y: np.ndarray,
        Z: np.ndarray,
        N: np.ndarray | None = None,
        mask: np.ndarray | None = None,
        spec_X: DistributionSpec | None = None,
        spec_Y: DistributionSpec | None = None,
        spec_Z: DistributionSpec | None = None,
        row_labels: Sequence | None = None,
        col_labels: Sequence | None = None,
        y_labels: Sequence | None = None,
        z_labels: Sequence | None = None,
    ):
        """
        Инициализация набора данных.

        Args:
            X: Матрица успехов (или вещественных значений для гауссова X)
            Y: Матрица, делящая столбцы с X
            Z: Матрица, делящая строки с X
            N: Матрица числа испытаний для биномиального X
            mask: Маска наблюдаемых ячеек X (True: наблюдение)
            spec_X: Описание распределения X (по умолчанию binomial с N)
            spec_Y: Описание распределения Y (по умолчанию normal)
            spec_Z: Описание распределения Z (по умолчанию normal)
            row_labels: Метки строк X (отбивающие)
            col_labels: Метки столбцов X (питчеры)
            y_labels: Метки строк Y (показатели питчеров)
            z_labels: Метки столбцов Z (показатели отбивающих)

        Raises:
            DimensionError: Если размеры блоков не согласованы
            DataValidationError: Если нарушены инварианты содержимого
        """
        X = np.array(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        Z = np.asarray(Z, dtype=float)

        if X.ndim != 2 or Y.ndim != 2 or Z.ndim != 2:
            raise DimensionError("Блоки X, Y, Z должны быть матрицами")
        m1, n1 = X.shape
        if Y.shape[1] != n1:
            raise DimensionError(
                f"Y должен иметь {n1} столбцов (как X), получено {Y.shape[1]}"
            )
        if Z.shape[0] != m1:
            raise DimensionError(
                f"Z должен иметь {m1} строк (как X), получено {Z.shape[0]}"
            )

        mask = np.ones(X.shape, dtype=bool) if mask is None else np.asarray(mask)
        if mask.shape != X.shape:
            raise DimensionError("Форма маски не совпадает с формой X")
        mask = mask.astype(bool)

        if spec_X is None and N is None:
            spec_X = DistributionSpec.normal()

        if spec_X is None or spec_X.family is Family.BINOMIAL:
            trials = np.array(spec_X.trials if N is None else N, dtype=float)
            if trials.shape != X.shape:
                raise DimensionError("Форма N не совпадает с формой X")
            trials[~mask & ~np.isfinite(trials)] = 1.0
            if (
                np.any(~np.isfinite(trials))
                or np.any(trials < 1)
                or np.any(np.abs(trials - np.round(trials)) > 1e-9)
            ):
                raise DataValidationError("N должно быть целым и не меньше 1")
            X[~mask & ~np.isfinite(X)] = 0.0
            observed_x = X[mask]
            observed_n = trials[mask]
            if np.any(observed_x < 0) or np.any(observed_x > observed_n):
                raise DataValidationError("Нарушено 0 ≤ X ≤ N в наблюдаемых ячейках")
            spec_X = DistributionSpec.binomial(trials)
            N = trials
        else:
            X[~mask & ~np.isfinite(X)] = 0.0
            N = np.ones(X.shape) if N is None else np.asarray(N, dtype=float)

        if not np.all(np.isfinite(X)):
            raise DataValidationError("X содержит нечисловые значения")
        for name, block in (("Y", Y), ("Z", Z)):
            if not np.all(np.isfinite(block)):
                raise DataValidationError(f"{name} не должен содержать пропусков")

        spec_Y = spec_Y or DistributionSpec.normal()
        spec_Z = spec_Z or DistributionSpec.normal()
        _check_block(Y, spec_Y, "Y")
        _check_block(Z, spec_Z, "Z")

        self._X = _frozen(X)
        self._N = _frozen(N)
        self._Y = _frozen(Y)
        self._Z = _frozen(Z)
        self._mask = np.array(mask, dtype=bool)
        self._mask.setflags(write=False)
        self.spec_X = spec_X
        self.spec_Y = spec_Y
        self.spec_Z = spec_Z
        self.row_labels = _labels(row_labels, m1, "строк X")
        self.col_labels = _labels(col_labels, n1, "столбцов X")
        self.y_labels = _labels(y_labels, Y.shape[0], "строк Y")
        self.z_labels = _labels(z_labels, Z.shape[1], "столбцов Z")

    @property
    def X(self) -> np.ndarray:
        """Матрица X."""
        return self._X

    @property
    def N(self) -> np.ndarray:
        """Матрица числа испытаний."""
        return self._N

    @property
    def Y(self) -> np.ndarray:
        """Матрица Y."""
        return self._Y

    @property
    def Z(self) -> np.ndarray:
        """Матрица Z."""
        return self._Z

    @property
    def mask(self) -> np.ndarray:
        """Маска наблюдаемых ячеек X."""
        return self._mask

    @property
    def dims(self) -> tuple[int, int, int, int]:
        """Размеры (m1, n1, m2, n2)."""
        m1, n1 = self._X.shape
        return m1, n1, self._Y.shape[0], self._Z.shape[1]

    @property
    def x_is_binomial(self) -> bool:
        """True, если X моделируется биномиальным распределением."""
        return self.spec_X.family is Family.BINOMIAL

    def proportions(self) -> np.ndarray:
        """Эмпирические доли X / N (для гауссова X: сами значения)."""
        if self.x_is_binomial:
            return self._X / self._N
        return self._X.copy()

    def _derive(self, **changes) -> LinkedDataset:
        params = {
            "X": self._X,
            "Y": self._Y,
            "Z": self._Z,
            "N": self._N if self.x_is_binomial else None,
            "mask": self._mask,
            "spec_X": self.spec_X,
            "spec_Y": self.spec_Y,
            "spec_Z": self.spec_Z,
            "row_labels": self.row_labels,
            "col_labels": self.col_labels,
            "y_labels": self.y_labels,
            "z_labels": self.z_labels,
        }
        params.update(changes)
        return LinkedDataset(**params)

    def with_filled(self, p_hat: np.ndarray) -> LinkedDataset:
        """
        Заполнить пропущенные ячейки X текущими оценками вероятностей.

        Для биномиального X пропуски становятся псевдо-счётчиками x = p̂ при N = 1;
        для гауссова X: значениями p̂.

        Args:
            p_hat: Матрица оценок вероятностей m1×n1

        Returns:
            Новый набор данных с той же маской
        """
        missing = ~self._mask
        X = np.array(self._X)
        X[missing] = np.asarray(p_hat)[missing]
        if not self.x_is_binomial:
            return self._derive(X=X)
        N = np.array(self._N)
        N[missing] = 1.0
        return self._derive(X=X, N=N, spec_X=self.spec_X.with_trials(N))

    def with_mask(self, mask: np.ndarray) -> LinkedDataset:
        """
        Скрыть дополнительные ячейки X (например, тестовый фолд).

        Скрытые ячейки получают заглушки X = 0, N = 1, чтобы подгонка не видела
        исходных значений.

        Args:
            mask: Новая маска наблюдаемых ячеек

        Returns:
            Новый набор данных
        """
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != self._X.shape:
            raise DimensionError("Форма маски не совпадает с формой X")
        hidden = ~mask
        X = np.array(self._X)
        X[hidden] = 0.0
        if not self.x_is_binomial:
            return self._derive(X=X, mask=mask)
        N = np.array(self._N)
        N[hidden] = 1.0
        return self._derive(X=X, N=N, mask=mask, spec_X=self.spec_X.with_trials(N))

    def as_gaussian(self, values: np.ndarray) -> LinkedDataset:
        """
        Гауссов вариант набора: X заменён матрицей вероятностей.

        Args:
            values: Полностью заполненная матрица оценок p̂

        Returns:
            Набор данных с normal-описанием X
        """
        return self._derive(
            X=np.asarray(values, dtype=float),
            N=None,
            spec_X=DistributionSpec.normal(),
        )

    def with_dispersions(
        self,
        sigma2_X: float | None = None,
        sigma2_Y: float | None = None,
        sigma2_Z: float | None = None,
    ) -> LinkedDataset:
        """
        Копия с новыми дисперсиями гауссовых блоков.

        Значения для негауссовых блоков и None игнорируются.

        Returns:
            Новый набор данных
        """
        changes = {}
        for key, spec, value in (
            ("spec_X", self.spec_X, sigma2_X),
            ("spec_Y", self.spec_Y, sigma2_Y),
            ("spec_Z", self.spec_Z, sigma2_Z),
        ):
            if value is not None and spec.family is Family.NORMAL:
                changes[key] = spec.with_dispersion(value)
        if not changes:
            return self
        return self._derive(**changes)

    def __repr__(self) -> str:
        """Представление набора для отладки."""
        m1, n1, m2, n2 = self.dims
        return (
            f"LinkedDataset(X={m1}x{n1} {self.spec_X.family.value}, "
            f"Y={m2}x{n1} {self.spec_Y.family.value}, "
            f"Z={m1}x{n2} {self.spec_Z.family.value}, "
            f"observed={int(self._mask.sum())})"
        )


def _check_block(block: np.ndarray, spec: DistributionSpec, name: str) -> None:
    if spec.family is Family.BINOMIAL:
        if spec.trials.shape != block.shape:
            raise DimensionError(f"Форма N для {name} не совпадает с формой блока")
        if np.any(block < 0) or np.any(block > spec.trials):
            raise DataValidationError(f"Нарушено 0 ≤ {name} ≤ N")
    elif spec.family is Family.POISSON and np.any(block < 0):
        raise DataValidationError(f"{name} должен быть неотрицательным")


@dataclass(frozen=True)
class Partition:
    """Часть матрицы отклика вдоль оси axis: [start, stop) с описанием spec."""

    axis: int
    start: int
    stop: int
    spec: DistributionSpec

    def index(self) -> tuple[slice, slice]:
        """Индекс блока в матрице отклика."""
        part = slice(self.start, self.stop)
        return (part, slice(None)) if self.axis == 0 else (slice(None), part)

    def transposed(self) -> Partition:
        """Та же часть в транспонированной матрице."""
        return Partition(1 - self.axis, self.start, self.stop, self.spec.transposed())


@dataclass(frozen=True)
class StackedView:
    """Составная матрица отклика с описаниями распределений по блокам."""

    data: np.ndarray
    partitions: tuple[Partition, ...]

    def __post_init__(self) -> None:
        """Проверить, что части покрывают матрицу без перекрытий."""
        if not self.partitions:
            raise DimensionError("Не задано ни одной части отклика")
        axes = {p.axis for p in self.partitions}
        if len(axes) != 1:
            raise DimensionError("Все части должны лежать вдоль одной оси")
        axis = axes.pop()
        ordered = sorted(self.partitions, key=lambda p: p.start)
        position = 0
        for part in ordered:
            if part.start != position or part.stop <= part.start:
                raise DimensionError("Части отклика должны покрывать матрицу без перекрытий")
            position = part.stop
        if position != self.data.shape[axis]:
            raise DimensionError("Части отклика не покрывают всю матрицу")
        for part in self.partitions:
            trials = part.spec.trials
            block_shape = self.data[part.index()].shape
            if trials is not None and trials.shape != block_shape:
                raise DimensionError("Форма N части не совпадает с формой блока")

    @classmethod
    def single(cls, data: np.ndarray, spec: DistributionSpec) -> StackedView:
        """Однородная матрица отклика."""
        data = np.asarray(data, dtype=float)
        return cls(data, (Partition(0, 0, data.shape[0], spec),))

    @property
    def shape(self) -> tuple[int, int]:
        """Форма составной матрицы."""
        return self.data.shape

    def transposed(self) -> StackedView:
        """Транспонированная матрица с транспонированными частями."""
        return StackedView(
            self.data.T, tuple(p.transposed() for p in self.partitions)
        )

    def block(self, position: int) -> np.ndarray:
        """Данные части с номером position."""
        return self.data[self.partitions[position].index()]

    def base_weights(self) -> np.ndarray:
        """Базовые веса IRLS: N в биномиальных частях, 1 в остальных."""
        weights = np.ones(self.data.shape)
        for part in self.partitions:
            index = part.index()
            weights[index] = part.spec.base_weights(weights[index].shape)
        return weights


def augment_rows(dataset: LinkedDataset) -> StackedView:
    """
    Вертикальная склейка Ỹ = [X; Y] размера (m1 + m2)×n1.

    Args:
        dataset: Связанный набор данных

    Returns:
        Составная матрица с границей блоков после строки m1
    """
    m1, _, m2, _ = dataset.dims
    data = np.vstack([dataset.X, dataset.Y])
    return StackedView(
        data,
        (
            Partition(0, 0, m1, dataset.spec_X),
            Partition(0, m1, m1 + m2, dataset.spec_Y),
        ),
    )


def augment_cols(dataset: LinkedDataset) -> StackedView:
    """
    Горизонтальная склейка Z̃ = [X Z] размера m1×(n1 + n2).

    Args:
        dataset: Связанный набор данных

    Returns:
        Составная матрица с границей блоков после столбца n1
    """
    _, n1, _, n2 = dataset.dims
    data = np.hstack([dataset.X, dataset.Z])
    return StackedView(
        data,
        (
            Partition(1, 0, n1, dataset.spec_X),
            Partition(1, n1, n1 + n2, dataset.spec_Z),
        ),
    )


@dataclass
class Factorization:
    """
    Совместная факторизация ранга r натуральных параметров.

    Θ_X = U Vᵀ, Θ_Y = U_y Vᵀ, Θ_Z = U V_zᵀ. Отдельные компоненты
    неидентифицируемы (определены с точностью до калибровки G, G⁻ᵀ);
    сравнивать можно только реконструкции.
    """

    U: np.ndarray
    V: np.ndarray
    U_y: np.ndarray
    V_z: np.ndarray
    rank: int
    sigma2_Y: float
    sigma2_Z: float
    converged: bool = False
    iterations: int = 0
    mu_trace: list[float] = field(default_factory=list)
    x_family: Family = Family.BINOMIAL
    y_family: Family = Family.NORMAL
    z_family: Family = Family.NORMAL
    sigma2_X: float | None = None
    ridge_events: int = 0
    inner_failures: int = 0

    @property
    def theta_X(self) -> np.ndarray:
        """Натуральные параметры X."""
        return self.U @ self.V.T

    @property
    def theta_Y(self) -> np.ndarray:
        """Натуральные параметры Y."""
        return self.U_y @ self.V.T

    @property
    def theta_Z(self) -> np.ndarray:
        """Натуральные параметры Z."""
        return self.U @ self.V_z.T

    @property
    def dims(self) -> tuple[int, int, int, int]:
        """Размеры (m1, n1, m2, n2)."""
        return self.U.shape[0], self.V.shape[0], self.U_y.shape[0], self.V_z.shape[0]

    def to_dict(self) -> dict:
        """
        Преобразовать факторизацию в словарь для сохранения в JSON.

        Returns:
            Словарь: размеры, ранг, компоненты построчно, диагностика
        """
        m1, n1, m2, n2 = self.dims
        return {
            "dims": {"m1": m1, "n1": n1, "m2": m2, "n2": n2},
            "rank": self.rank,
            "families": {
                "X": self.x_family.value,
                "Y": self.y_family.value,
                "Z": self.z_family.value,
            },
            "components": {
                "U": self.U.tolist(),
                "V": self.V.tolist(),
                "U_y": self.U_y.tolist(),
                "V_z": self.V_z.tolist(),
            },
            "sigma2": {"X": self.sigma2_X, "Y": self.sigma2_Y, "Z": self.sigma2_Z},
            "diagnostics": {
                "converged": self.converged,
                "iterations": self.iterations,
                "mu_trace": list(self.mu_trace),
                "ridge_events": self.ridge_events,
                "inner_failures": self.inner_failures,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> Factorization:
        """
        Создать факторизацию из словаря (из JSON).

        Args:
            data: Словарь в формате to_dict()

        Returns:
            Экземпляр Factorization
        """
        rank = int(data["rank"])
        dims = data["dims"]
        components = data["components"]

        def matrix(name: str, rows: int) -> np.ndarray:
            return np.asarray(components[name], dtype=float).reshape(rows, rank)

        diagnostics = data.get("diagnostics", {})
        families = data.get("families", {})
        sigma2 = data["sigma2"]
        return cls(
            U=matrix("U", dims["m1"]),
            V=matrix("V", dims["n1"]),
            U_y=matrix("U_y", dims["m2"]),
            V_z=matrix("V_z", dims["n2"]),
            rank=rank,
            sigma2_Y=float(sigma2["Y"]),
            sigma2_Z=float(sigma2["Z"]),
            converged=bool(diagnostics.get("converged", False)),
            iterations=int(diagnostics.get("iterations", 0)),
            mu_trace=[float(v) for v in diagnostics.get("mu_trace", [])],
            x_family=Family(families.get("X", "binomial")),
            y_family=Family(families.get("Y", "normal")),
            z_family=Family(families.get("Z", "normal")),
            sigma2_X=None if sigma2.get("X") is None else float(sigma2["X"]),
            ridge_events=int(diagnostics.get("ridge_events", 0)),
            inner_failures=int(diagnostics.get("inner_failures", 0)),
        )


@dataclass(frozen=True)
class Reconstruction:
    """Реконструкции натуральных параметров и средних."""

    theta_X: np.ndarray
    theta_Y: np.ndarray
    theta_Z: np.ndarray
    P: np.ndarray
    mu_Y: np.ndarray
    mu_Z: np.ndarray


def reconstruct(factorization: Factorization) -> Reconstruction:
    """
    Восстановить Θ_X, Θ_Y, Θ_Z и средние P, μ_Y, μ_Z.

    Args:
        factorization: Подогнанная факторизация

    Returns:
        Реконструкция; для биномиального X матрица P лежит строго в (0, 1)
    """
    theta_X = factorization.theta_X
    theta_Y = factorization.theta_Y
    theta_Z = factorization.theta_Z
    return Reconstruction(
        theta_X=theta_X,
        theta_Y=theta_Y,
        theta_Z=theta_Z,
        P=inverse_link(factorization.x_family, theta_X),
        mu_Y=inverse_link(factorization.y_family, theta_Y),
        mu_Z=inverse_link(factorization.z_family, theta_Z),
    )
