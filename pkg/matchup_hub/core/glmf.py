"""
GLMF: чередующаяся подгонка совместной факторизации.

Цикл одной внешней итерации:
    1. U_y | (Y, V)
    2. U   | (Z̃ = [X Z], Ṽ = [V; V_z])
    3. Ũ = [U; U_y]
    4. V   | (Ỹ = [X; Y], Ũ)
    5. V_z | (Z, U)
    6. Ṽ = [V; V_z]
после чего дисперсии гауссовых блоков пересчитываются как средний квадрат
остатков. Каждый шаг: вызов гетерогенного IRLS. При гауссовом X это LMF.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy import linalg

from matchup_hub.core.exceptions import FitError
from matchup_hub.core.expfam import (
    DistributionSpec,
    Family,
    link,
    log_density,
)
from matchup_hub.core.irls import IrlsProblem, solve_rows
from matchup_hub.core.models import (
    Factorization,
    LinkedDataset,
    StackedView,
    augment_cols,
    augment_rows,
    reconstruct,
)

logger = logging.getLogger(__name__)

SIGMA2_FLOOR = 1e-8
INIT_MODES = ("svd", "random")


@dataclass
class FitConfig:
    """Параметры подгонки GLMF."""

    rank: int
    outer_tolerance: float = 1e-5
    max_outer_iter: int = 200
    seed: int = 0
    init: str = "svd"
    inner_tolerance: float = 1e-6
    inner_max_iter: int = 100
    update_dispersion: bool = True

    def __post_init__(self) -> None:
        """Проверить параметры."""
        if isinstance(self.rank, bool) or int(self.rank) != self.rank or self.rank < 1:
            raise FitError(f"Ранг должен быть целым ≥ 1, получено {self.rank}")
        self.rank = int(self.rank)
        if self.init not in INIT_MODES:
            raise FitError(f"Неизвестный режим инициализации '{self.init}'")
        if self.outer_tolerance <= 0 or self.inner_tolerance <= 0:
            raise FitError("Пороги сходимости должны быть положительными")
        if self.max_outer_iter < 1 or self.inner_max_iter < 1:
            raise FitError("Число итераций должно быть положительным")

    def validate_for(self, dataset: LinkedDataset) -> None:
        """
        Проверить ранг против размеров набора.

        Raises:
            FitError: Если ранг превышает min(m1, n1), m2 или n2
        """
        m1, n1, m2, n2 = dataset.dims
        limit = min(m1, n1, m2, n2)
        if self.rank > limit:
            raise FitError(
                f"Ранг {self.rank} превышает допустимый {limit} "
                f"для блоков {m1}x{n1}, {m2}x{n1}, {m1}x{n2}"
            )

    def to_dict(self) -> dict:
        """Словарь для манифеста."""
        return asdict(self)


def working_surrogate(data: np.ndarray, spec: DistributionSpec) -> np.ndarray:
    """
    Рабочая оценка натуральных параметров блока для инициализации.

    Биномиальный блок заменяется эмпирическими логитами скорректированных
    долей (x + 0.5) / (N + 1), пуассоновский: log(x + 0.1), гауссов
    остаётся как есть.
    """
    data = np.asarray(data, dtype=float)
    if spec.family is Family.BINOMIAL:
        return link(Family.BINOMIAL, (data + 0.5) / (spec.trials + 1.0))
    if spec.family is Family.POISSON:
        return link(Family.POISSON, data + 0.1)
    return data


def initialize(dataset: LinkedDataset, config: FitConfig) -> np.ndarray:
    """
    Начальное Ṽ = [V; V_z] размера (n1 + n2)×r.

    Режим svd: первые r правых сингулярных векторов рабочей оценки Z̃ = [X Z].
    Режим random: элементы из N(0, 0.01), воспроизводимо по seed.

    Args:
        dataset: Связанный набор данных
        config: Параметры подгонки

    Returns:
        Матрица Ṽ

    Raises:
        FitError: Если ранг превышает число сингулярных значений
    """
    _, n1, _, n2 = dataset.dims
    if config.init == "random":
        rng = np.random.default_rng(config.seed)
        return rng.normal(0.0, 0.1, size=(n1 + n2, config.rank))

    z_tilde = np.hstack(
        [
            working_surrogate(dataset.X, dataset.spec_X),
            working_surrogate(dataset.Z, dataset.spec_Z),
        ]
    )
    _, singular_values, vt = linalg.svd(z_tilde, full_matrices=False)
    if config.rank > singular_values.size:
        raise FitError(
            f"Ранг {config.rank} превышает число сингулярных значений "
            f"({singular_values.size})"
        )
    return vt[: config.rank].T.copy()


def initial_dispersion(block: np.ndarray) -> float:
    """Начальная σ²: средний квадрат блока (остатки нулевой модели)."""
    return max(float(np.mean(np.square(block))), SIGMA2_FLOOR)


def residual_variance(block: np.ndarray, theta: np.ndarray) -> float:
    """Оценка σ² максимального правдоподобия: ‖B − Θ‖²_F / (строк · столбцов)."""
    return max(float(np.mean(np.square(block - theta))), SIGMA2_FLOOR)


def _relative_change(new: np.ndarray, old: np.ndarray) -> float:
    return float(np.linalg.norm(new - old) / (np.linalg.norm(old) + 1e-8))


class ComponentSolver:
    """Обёртка над IRLS с общими порогами и учётом регуляризаций."""

    def __init__(self, config: FitConfig):
        self.config = config
        self.ridge_events = 0
        self.inner_failures = 0

    def __call__(
        self,
        view: StackedView,
        design: np.ndarray,
        current: np.ndarray | None,
    ) -> np.ndarray:
        start = None if current is None else design @ current.T
        solution = solve_rows(
            IrlsProblem(
                response=view,
                design=design,
                tolerance=self.config.inner_tolerance,
                max_iter=self.config.inner_max_iter,
                start_theta=start,
            )
        )
        self.ridge_events += solution.ridge_slices
        if not solution.converged:
            self.inner_failures += 1
        return solution.coefficients


def fit(
    dataset: LinkedDataset,
    config: FitConfig,
    warm_start: Factorization | None = None,
) -> Factorization:
    """
    Подогнать GLMF ранга r.

    Все ячейки X участвуют в подгонке; значения пропущенных ячеек задаёт
    вызывающий код (модуль импутации).

    Args:
        dataset: Связанный набор данных
        config: Параметры подгонки
        warm_start: Предыдущая факторизация того же размера и ранга

    Returns:
        Факторизация с диагностикой; converged=False, если порог не достигнут

    Raises:
        FitError: Если ранг недопустим или тёплый старт несовместим
        IrlsError: Если внутренний решатель столкнулся с NaN
    """
    config.validate_for(dataset)
    _, n1, _, _ = dataset.dims
    X, Y, Z = dataset.X, dataset.Y, dataset.Z
    gaussian = {
        "X": dataset.spec_X.family is Family.NORMAL,
        "Y": dataset.spec_Y.family is Family.NORMAL,
        "Z": dataset.spec_Z.family is Family.NORMAL,
    }

    if warm_start is not None:
        if warm_start.dims != dataset.dims or warm_start.rank != config.rank:
            raise FitError("Тёплый старт не совпадает по размерам или рангу")
        U, V = warm_start.U.copy(), warm_start.V.copy()
        U_y, V_z = warm_start.U_y.copy(), warm_start.V_z.copy()
        sigma2 = {
            "X": warm_start.sigma2_X or initial_dispersion(X),
            "Y": warm_start.sigma2_Y,
            "Z": warm_start.sigma2_Z,
        }
    else:
        v_tilde = initialize(dataset, config)
        V, V_z = v_tilde[:n1], v_tilde[n1:]
        U = U_y = None
        sigma2 = {
            "X": initial_dispersion(X),
            "Y": initial_dispersion(Y),
            "Z": initial_dispersion(Z),
        }

    solve = ComponentSolver(config)
    trace: list[float] = []
    previous = None
    converged = False
    iteration = 0

    for iteration in range(1, config.max_outer_iter + 1):
        current = dataset.with_dispersions(sigma2["X"], sigma2["Y"], sigma2["Z"])

        U_y = solve(
            StackedView.single(Y.T, current.spec_Y.transposed()), V, U_y
        )
        v_tilde = np.vstack([V, V_z])
        U = solve(augment_cols(current).transposed(), v_tilde, U)
        u_tilde = np.vstack([U, U_y])
        V = solve(augment_rows(current), u_tilde, V)
        V_z = solve(StackedView.single(Z, current.spec_Z), U, V_z)

        if config.update_dispersion:
            if gaussian["X"]:
                sigma2["X"] = residual_variance(X, U @ V.T)
            if gaussian["Y"]:
                sigma2["Y"] = residual_variance(Y, U_y @ V.T)
            if gaussian["Z"]:
                sigma2["Z"] = residual_variance(Z, U @ V_z.T)

        means = reconstruct(
            _factorization(U, V, U_y, V_z, config.rank, sigma2, dataset)
        )
        means = (means.P, means.mu_Y, means.mu_Z)
        if previous is not None:
            change = max(_relative_change(n, o) for n, o in zip(means, previous))
            trace.append(change)
            logger.debug(f"glmf iteration={iteration} change={change:.3e}")
            if change < config.outer_tolerance:
                converged = True
                break
        previous = means

    if not converged:
        logger.warning(
            f"GLMF ранга {config.rank} не сошёлся за {config.max_outer_iter} итераций"
        )

    result = _factorization(U, V, U_y, V_z, config.rank, sigma2, dataset)
    result.converged = converged
    result.iterations = iteration
    result.mu_trace = trace
    result.ridge_events = solve.ridge_events
    result.inner_failures = solve.inner_failures
    return result


def _factorization(
    U: np.ndarray,
    V: np.ndarray,
    U_y: np.ndarray,
    V_z: np.ndarray,
    rank: int,
    sigma2: dict[str, float],
    dataset: LinkedDataset,
) -> Factorization:
    x_family = dataset.spec_X.family
    return Factorization(
        U=U,
        V=V,
        U_y=U_y,
        V_z=V_z,
        rank=rank,
        sigma2_Y=sigma2["Y"],
        sigma2_Z=sigma2["Z"],
        x_family=x_family,
        y_family=dataset.spec_Y.family,
        z_family=dataset.spec_Z.family,
        sigma2_X=sigma2["X"] if x_family is Family.NORMAL else None,
    )


def _block_spec(spec: DistributionSpec, sigma2: float | None) -> DistributionSpec:
    if spec.family is Family.NORMAL and sigma2 is not None:
        return spec.with_dispersion(sigma2)
    return spec


def joint_log_likelihood(dataset: LinkedDataset, factorization: Factorization) -> float:
    """
    Совместное логарифмическое правдоподобие по всем блокам.

    Суммируются log-плотности наблюдаемых ячеек X (для binomial: в шкале
    счётчиков с N) и всех ячеек Y и Z с текущими σ̂².

    Args:
        dataset: Связанный набор данных
        factorization: Подогнанная факторизация

    Returns:
        Значение логарифма правдоподобия
    """
    mask = dataset.mask
    theta_X = factorization.theta_X

    if dataset.spec_X.family is Family.BINOMIAL:
        spec_X = DistributionSpec.binomial(dataset.N[mask])
    else:
        spec_X = _block_spec(dataset.spec_X, factorization.sigma2_X)
    total = log_density(dataset.spec_X.family, dataset.X[mask], theta_X[mask], spec_X)

    spec_Y = _block_spec(dataset.spec_Y, factorization.sigma2_Y)
    spec_Z = _block_spec(dataset.spec_Z, factorization.sigma2_Z)
    total += log_density(spec_Y.family, dataset.Y, factorization.theta_Y, spec_Y)
    total += log_density(spec_Z.family, dataset.Z, factorization.theta_Z, spec_Z)
    return total
