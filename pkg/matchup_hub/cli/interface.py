"""Команды."""

from __future__ import annotations

import argparse
import dataclasses
import platform
import sys
import time
from pathlib import Path
from typing import Any, Callable

import numpy as np
import pandas as pd
import scipy
from prettytable import PrettyTable

from matchup_hub import __version__
from matchup_hub.core.baselines import Method, parse_methods
from matchup_hub.core.evaluation import (
    METRICS,
    CvConfig,
    favorable_matchups,
    recovery_correlations,
    run_cv,
    run_simulation_study,
)
from matchup_hub.core.exceptions import StorageError, UsageError
from matchup_hub.core.glmf import INIT_MODES, FitConfig, fit, joint_log_likelihood
from matchup_hub.core.impute import ImputationConfig, impute, initialize_missing
from matchup_hub.core.models import Factorization, LinkedDataset, reconstruct
from matchup_hub.core.simgen import (
    DEFAULT_DIMS,
    GridSpec,
    generate,
    grid,
    illustrative_config,
)
from matchup_hub.decorators import CommandOutcome, handle_errors, validate_rank
from matchup_hub.infra.settings import DEFAULTS, settings
from matchup_hub.infra.storage import ArtifactStore
from matchup_hub.ingest.loader import load_season
from matchup_hub.ingest.storage import METADATA_FILE, load_dataset, save_dataset
from matchup_hub.ingest.synthetic import LeagueConfig, generate_league, write_league

# Флаги, перекрывающие одноимённые ключи настроек
OVERRIDABLE = ("sigmas", "nmaxes", "ranks", "replicates", "master_seed", "jobs", "folds")
STANDARD_SIGMAS = tuple(DEFAULTS["sigmas"])
STANDARD_NMAXES = tuple(DEFAULTS["nmaxes"])


def _split(value: Any) -> list[str]:
    if value is None:
        return []
    if isinstance(value, (list, tuple)):
        return [str(item) for item in value]
    return [item.strip() for item in str(value).split(",") if item.strip()]


def _valid(kind: str, standard: tuple | None) -> str:
    if standard is None:
        return kind
    return f"{kind} (стандартная сетка: {', '.join(f'{v:g}' for v in standard)})"


def parse_floats(
    value: Any, option: str, standard: tuple | None = None
) -> tuple[float, ...]:
    """Разобрать список положительных чисел через запятую."""
    valid = _valid("положительные числа через запятую", standard)
    try:
        numbers = tuple(float(item) for item in _split(value))
    except ValueError:
        raise UsageError(option, value, valid)
    if not numbers or not all(number > 0 for number in numbers):
        raise UsageError(option, value, valid)
    return numbers


def parse_ints(
    value: Any, option: str, standard: tuple | None = None
) -> tuple[int, ...]:
    """Разобрать список целых ≥ 1 через запятую."""
    valid = _valid("целые числа ≥ 1 через запятую", standard)
    try:
        numbers = tuple(int(item) for item in _split(value))
    except ValueError:
        raise UsageError(option, value, valid)
    if not numbers or min(numbers) < 1:
        raise UsageError(option, value, valid)
    return numbers


def _options(args: argparse.Namespace) -> dict[str, Any]:
    """Настройки: флаги > файл --config > pyproject > встроенные значения."""
    options = settings.merged(getattr(args, "config", None))
    for key in OVERRIDABLE:
        value = getattr(args, key, None)
        if value is not None:
            options[key] = value
    jobs = options["jobs"]
    if isinstance(jobs, bool) or int(jobs) != jobs or jobs < 1:
        raise UsageError("jobs", jobs, "целое ≥ 1")
    return options


def _resolve(path: str | Path) -> Path:
    path = Path(path)
    return path if path.is_absolute() else settings.base_dir / path


def _output_store(args: argparse.Namespace, options: dict, command: str) -> ArtifactStore:
    if getattr(args, "output", None):
        return ArtifactStore(args.output)
    return ArtifactStore(_resolve(options["output_dir"]) / command)


def _data_dir(args: argparse.Namespace, options: dict) -> Path:
    if getattr(args, "data", None):
        return Path(args.data)
    return _resolve(options["data_dir"])


def _load_data(path: Path) -> LinkedDataset:
    """Каталог набора (dataset.json) или каталог с таблицами сезона."""
    if (path / METADATA_FILE).exists():
        return load_dataset(path)
    return load_season(path)


def _imputation_config(options: dict) -> ImputationConfig:
    return ImputationConfig(
        tolerance=float(options["impute_tolerance"]),
        max_iter=int(options["impute_max_iter"]),
        clip=(float(options["clip_lower"]), float(options["clip_upper"])),
        outer_tolerance=float(options["outer_tolerance"]),
        max_outer_iter=int(options["max_outer_iter"]),
        inner_tolerance=float(options["irls_tolerance"]),
        inner_max_iter=int(options["irls_max_iter"]),
        seed=int(options["master_seed"]),
    )


@validate_rank
def _fit_config(options: dict, *, rank: Any, init: str | None = None) -> FitConfig:
    config = _imputation_config(options).fit_config(rank)
    if init is not None:
        config = dataclasses.replace(config, init=init)
    return config


@validate_rank
def _grid_spec(
    options: dict, dims: tuple[int, ...], *, ranks: Any, missing_fraction: float | None
) -> GridSpec:
    spec = GridSpec(
        sigmas=parse_floats(options["sigmas"], "sigma", STANDARD_SIGMAS),
        nmaxes=parse_ints(options["nmaxes"], "nmax", STANDARD_NMAXES),
        ranks=ranks,
        replicates=parse_ints(options["replicates"], "reps")[0],
        master_seed=int(options["master_seed"]),
        dims=dims,
    )
    if missing_fraction is not None:
        spec = dataclasses.replace(spec, missing_fraction=missing_fraction)
    return spec


@validate_rank
def _cv_config(options: dict, methods: tuple[Method, ...], *, ranks: Any) -> CvConfig:
    impute_config = _imputation_config(options)
    return CvConfig(
        folds=int(options["folds"]),
        seed=int(options["master_seed"]),
        ranks=ranks,
        clip=impute_config.clip,
        methods=methods,
        jobs=int(options["jobs"]),
        impute=impute_config,
    )


def _versions() -> dict[str, str]:
    return {
        "matchup_hub": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
    }


def _write_manifest(
    store: ArtifactStore,
    command: str,
    config: dict,
    master_seed: int,
    seconds: float,
) -> None:
    """
    Записать manifest.json и timings.json.

    Время выполнения хранится отдельно, чтобы остальные файлы совпадали
    байт в байт между запусками.
    """
    store.write_json(
        "manifest.json",
        {
            "command": command,
            "config": config,
            "master_seed": master_seed,
            "versions": _versions(),
        },
    )
    store.write_json("timings.json", {"command": command, "seconds": round(seconds, 3)})


def _pretty(frame: pd.DataFrame, digits: int = 4) -> str:
    """Таблица для консоли."""
    table = PrettyTable()
    table.field_names = [str(column) for column in frame.columns]
    for row in frame.itertuples(index=False):
        table.add_row(
            [f"{value:.{digits}f}" if isinstance(value, float) else value for value in row]
        )
    return table.get_string()


def _labels(dataset: LinkedDataset) -> tuple[tuple[str, ...], tuple[str, ...]]:
    m1, n1, _, _ = dataset.dims
    rows = dataset.row_labels or tuple(str(i) for i in range(m1))
    cols = dataset.col_labels or tuple(str(j) for j in range(n1))
    return rows, cols


@handle_errors
def cmd_simulate(args: argparse.Namespace) -> CommandOutcome:
    """Команда прогона сетки симуляций."""
    options = _options(args)
    dims = parse_ints(args.dims, "dims") if args.dims else DEFAULT_DIMS
    if len(dims) != 4:
        raise UsageError("dims", args.dims, "четыре целых m1,n1,m2,n2")
    spec = _grid_spec(
        options, dims, ranks=options["ranks"], missing_fraction=args.missing_fraction
    )
    methods = parse_methods(args.methods)
    config = _imputation_config(options)
    store = _output_store(args, options, "simulate")

    started = time.perf_counter()
    report = run_simulation_study(spec, methods, config, jobs=int(options["jobs"]))

    store.write_frame("cells.csv", report.cells)
    store.write_frame("aggregate.csv", report.aggregate())
    store.write_frame("marginals.csv", report.marginals())
    for nmax in spec.nmaxes:
        for metric in METRICS:
            store.write_frame(f"table_{metric}_nmax{nmax}.csv", report.table(metric, nmax))

    if args.dump_data:
        for cell in grid(spec):
            dataset, _ = generate(cell)
            name = f"sigma{cell.sigma:g}_nmax{cell.nmax}_r{cell.rank}_rep{cell.replicate}"
            save_dataset(dataset, store.path(f"datasets/{name}"))

    _write_manifest(
        store,
        "simulate",
        {
            "grid": spec.to_dict(),
            "methods": [m.value for m in methods],
            "impute": config.to_dict(),
            "dump_data": bool(args.dump_data),
        },
        spec.master_seed,
        time.perf_counter() - started,
    )

    largest = max(spec.nmaxes)
    lines = [
        f"Симуляции: {spec.size} ячеек, методов {len(methods)}",
        f"RMSE при nmax={largest}:",
        _pretty(report.table("rmse", largest)),
        f"Результаты сохранены в {store.root}",
    ]
    if report.failed_units:
        lines.append(f"Неудачных подгонок: {report.failed_units}")
    return CommandOutcome("\n".join(lines), 1 if report.failed_units else 0)


@handle_errors
def cmd_fit(args: argparse.Namespace) -> CommandOutcome:
    """Команда подгонки GLMF и сохранения факторизации."""
    options = _options(args)
    config = _fit_config(options, rank=args.rank, init=args.init)
    dataset = _load_data(_data_dir(args, options))
    store = _output_store(args, options, "fit")

    started = time.perf_counter()
    working = dataset
    if dataset.x_is_binomial and not dataset.mask.all():
        # Пропуски заполняются так же, как на первом шаге импутации
        p0, _ = initialize_missing(dataset.X, dataset.N, dataset.mask)
        working = dataset.with_filled(p0)
    factorization = fit(working, config)
    log_lik = joint_log_likelihood(dataset, factorization)

    path = store.write_json("factorization.json", factorization.to_dict())
    _write_manifest(
        store,
        "fit",
        {"data": str(_data_dir(args, options)), "fit": config.to_dict()},
        config.seed,
        time.perf_counter() - started,
    )
    return CommandOutcome(
        f"GLMF ранга {config.rank}: сошлась={factorization.converged}, "
        f"итераций={factorization.iterations}, log L={log_lik:.4f}\n"
        f"Факторизация сохранена: {path}"
    )


def _read_factorization(path: str | Path) -> Factorization:
    path = Path(path)
    data = ArtifactStore(path.parent).read_json(path.name)
    try:
        return Factorization.from_dict(data)
    except (KeyError, TypeError, ValueError) as e:
        raise StorageError(f"Некорректный файл факторизации {path}: {e}") from e


@handle_errors
def cmd_impute(args: argparse.Namespace) -> CommandOutcome:
    """Команда импутации вероятностей одним методом."""
    options = _options(args)
    method = parse_methods([args.method])[0]
    rank = None
    if method.uses_rank:
        if args.rank is None:
            raise UsageError("rank", None, "обязателен для glmf, lmf, lpca, pca")
        rank = _fit_config(options, rank=args.rank).rank
    config = _imputation_config(options)
    warm_start = _read_factorization(args.warm_start) if args.warm_start else None
    dataset = _load_data(_data_dir(args, options))
    store = _output_store(args, options, "impute")

    started = time.perf_counter()
    result = impute(dataset, method, rank, config, warm_start=warm_start)

    rows, cols = _labels(dataset)
    store.write_matrix("p_hat.csv", result.p_hat, rows, cols, index_name="batter_id")
    store.write_json("imputation.json", result.to_dict())
    if result.factorization is not None:
        store.write_json("factorization.json", result.factorization.to_dict())
    _write_manifest(
        store,
        "impute",
        {
            "data": str(_data_dir(args, options)),
            "method": method.value,
            "rank": rank,
            "warm_start": args.warm_start,
            "impute": config.to_dict(),
        },
        config.seed,
        time.perf_counter() - started,
    )

    text = (
        f"{method.label}{'' if rank is None else f' ранга {rank}'}: "
        f"итераций={result.iterations}, сошлась={result.converged}\n"
        f"Оценки сохранены в {store.path('p_hat.csv')}"
    )
    if result.failure:
        return CommandOutcome(f"{text}\nСбой подгонки: {result.failure}", 1)
    return CommandOutcome(text)


@handle_errors
def cmd_cv(args: argparse.Namespace) -> CommandOutcome:
    """Команда кросс-валидации методов на наблюдаемых встречах."""
    options = _options(args)
    config = _cv_config(options, parse_methods(args.methods), ranks=options["ranks"])
    dataset = _load_data(_data_dir(args, options))
    store = _output_store(args, options, "cv")

    started = time.perf_counter()
    report = run_cv(dataset, config)

    table = report.table()
    store.write_frame("cv_table.csv", table)
    store.write_frame("cv_summary.csv", report.summary())
    store.write_frame("cv_folds.csv", report.folds)
    store.write_frame("cv_pairs.csv", report.pairs)
    _write_manifest(
        store,
        "cv",
        {"data": str(_data_dir(args, options)), "cv": config.to_dict()},
        config.seed,
        time.perf_counter() - started,
    )

    lines = [
        f"Кросс-валидация: {config.folds} фолдов, размеры {report.fold_sizes}",
        _pretty(table),
        f"Результаты сохранены в {store.root}",
    ]
    if report.failed_units:
        lines.append(f"Неудачных подгонок: {report.failed_units}")
    return CommandOutcome("\n".join(lines), 1 if report.failed_units else 0)


@handle_errors
def cmd_report(args: argparse.Namespace) -> CommandOutcome:
    """Команда вывода самых выгодных встреч по сохранённой импутации."""
    started = time.perf_counter()
    p_hat, rows, cols = ArtifactStore(args.input).read_matrix("p_hat.csv")
    X = N = mask = None
    if args.data:
        dataset = _load_data(Path(args.data))
        if dataset.X.shape != p_hat.shape:
            raise StorageError(
                f"Размер p_hat.csv {p_hat.shape} не совпадает с набором {dataset.X.shape}"
            )
        if dataset.row_labels is not None and _labels(dataset) != (rows, cols):
            raise StorageError("Метки p_hat.csv не совпадают с набором данных")
        X, N, mask = dataset.X, dataset.N, dataset.mask

    top = favorable_matchups(p_hat, args.top, rows, cols, X, N, mask)
    frame = pd.DataFrame([matchup.to_dict() for matchup in top])
    if args.output:
        store = ArtifactStore(args.output)
        store.write_frame("favorable_matchups.csv", frame)
        _write_manifest(
            store,
            "report",
            {"input": str(args.input), "data": args.data, "top": args.top},
            int(settings.get("master_seed")),
            time.perf_counter() - started,
        )
    if frame.empty:
        return CommandOutcome("Нет встреч для отчёта")
    return CommandOutcome(
        f"Самые выгодные встречи для отбивающих (top {len(top)}):\n{_pretty(frame, 3)}"
    )


@handle_errors
def cmd_synth_data(args: argparse.Namespace) -> CommandOutcome:
    """Команда генерации синтетической лиги в схеме входных таблиц."""
    options = _options(args)
    league = LeagueConfig(
        batters=args.batters,
        pitchers=args.pitchers,
        observed_fraction=args.observed,
        rank=args.rank,
        seed=int(options["master_seed"]),
    )
    target = Path(args.output) if args.output else _resolve(options["data_dir"])

    started = time.perf_counter()
    paths = write_league(generate_league(league), target)
    store = ArtifactStore(target)
    _write_manifest(
        store,
        "synth-data",
        {"league": dataclasses.asdict(league)},
        league.seed,
        time.perf_counter() - started,
    )
    listing = "\n".join(f"- {name}: {path}" for name, path in paths.items())
    return CommandOutcome(f"Синтетическая лига записана:\n{listing}")


@handle_errors
def cmd_illustrate(args: argparse.Namespace) -> CommandOutcome:
    """Команда проверки восстановления параметров на полном синтетическом наборе."""
    options = _options(args)
    seed = int(options["master_seed"])
    dims = parse_ints(args.dims, "dims") if args.dims else DEFAULT_DIMS
    if len(dims) != 4:
        raise UsageError("dims", args.dims, "четыре целых m1,n1,m2,n2")
    cell = illustrative_config(seed, dims)
    config = _fit_config(options, rank=cell.rank)
    store = _output_store(args, options, "illustrate")

    started = time.perf_counter()
    dataset, truth = generate(cell)
    factorization = fit(dataset, config)
    correlations = recovery_correlations(truth, factorization)
    fitted = reconstruct(factorization)

    parts = []
    for block, true, estimate in (
        ("p", truth.p_true, fitted.P),
        ("mu_Y", truth.mu_Y, fitted.mu_Y),
        ("mu_Z", truth.mu_Z, fitted.mu_Z),
    ):
        rows, cols = np.indices(true.shape)
        parts.append(
            pd.DataFrame(
                {
                    "block": block,
                    "row": rows.ravel(),
                    "col": cols.ravel(),
                    "true": true.ravel(),
                    "fitted": estimate.ravel(),
                }
            )
        )
    store.write_frame("recovery_pairs.csv", pd.concat(parts, ignore_index=True))
    store.write_json(
        "correlations.json",
        {
            **correlations,
            "converged": factorization.converged,
            "iterations": factorization.iterations,
        },
    )
    _write_manifest(
        store,
        "illustrate",
        {"simulation": cell.to_dict(), "fit": config.to_dict()},
        seed,
        time.perf_counter() - started,
    )

    frame = pd.DataFrame(
        {"block": list(correlations), "pearson": list(correlations.values())}
    )
    return CommandOutcome(
        f"Восстановление параметров (ранг {cell.rank}, seed={seed}):\n{_pretty(frame)}"
    )


def _common(parser: argparse.ArgumentParser, jobs: bool = False) -> None:
    parser.add_argument("--config", default=None, help="TOML-файл с настройками")
    parser.add_argument("--output", default=None, help="Каталог результатов")
    parser.add_argument(
        "--seed", dest="master_seed", type=int, default=None, help="Главное зерно"
    )
    if jobs:
        parser.add_argument(
            "--jobs", type=int, default=None, help="Число параллельных процессов"
        )


def _setup_simulate(p: argparse.ArgumentParser) -> None:
    _common(p, jobs=True)
    p.add_argument("--sigma", dest="sigmas", default=None, help="Значения σ: 0.1,0.7")
    p.add_argument("--nmax", dest="nmaxes", default=None, help="Значения nmax: 1,16")
    p.add_argument("--rank", dest="ranks", default=None, help="Ранги: 1,3")
    p.add_argument("--reps", dest="replicates", default=None, help="Число повторов")
    p.add_argument("--methods", default=None, help="Методы через запятую")
    p.add_argument("--dims", default=None, help="Размеры m1,n1,m2,n2")
    p.add_argument("--missing-fraction", type=float, default=None)
    p.add_argument(
        "--dump-data", action="store_true", help="Сохранить сгенерированные наборы"
    )


def _setup_data(p: argparse.ArgumentParser, jobs: bool = False) -> None:
    _common(p, jobs=jobs)
    p.add_argument(
        "--data",
        default=None,
        help="Каталог набора (dataset.json) или таблиц сезона",
    )


# Словарь команд с их обработчиками и парсерами
COMMAND_HANDLERS: dict[
    str, tuple[Callable, Callable[[argparse.ArgumentParser], None]]
] = {
    "simulate": (cmd_simulate, _setup_simulate),
    "fit": (
        cmd_fit,
        lambda p: (
            _setup_data(p),
            p.add_argument("--rank", required=True),
            p.add_argument("--init", choices=INIT_MODES, default=None),
        ),
    ),
    "impute": (
        cmd_impute,
        lambda p: (
            _setup_data(p),
            p.add_argument("--method", required=True, help="glmf, lmf, lpca, pca, log5, mean"),
            p.add_argument("--rank", default=None),
            p.add_argument(
                "--warm-start", default=None, help="factorization.json для старта"
            ),
        ),
    ),
    "cv": (
        cmd_cv,
        lambda p: (
            _setup_data(p, jobs=True),
            p.add_argument("--folds", type=int, default=None),
            p.add_argument("--ranks", default=None, help="Ранги: 1,2,3"),
            p.add_argument("--methods", default=None, help="Методы через запятую"),
        ),
    ),
    "report": (
        cmd_report,
        lambda p: (
            p.add_argument("--input", required=True, help="Каталог с p_hat.csv"),
            p.add_argument("--data", default=None, help="Набор для наблюдаемых h/ab"),
            p.add_argument("--top", type=int, default=10),
            p.add_argument("--output", default=None),
        ),
    ),
    "synth-data": (
        cmd_synth_data,
        lambda p: (
            _common(p),
            p.add_argument("--batters", type=int, default=508),
            p.add_argument("--pitchers", type=int, default=516),
            p.add_argument("--observed", type=float, default=0.24),
            p.add_argument("--rank", type=int, default=3),
        ),
    ),
    "illustrate": (
        cmd_illustrate,
        lambda p: (
            _common(p),
            p.add_argument("--dims", default=None, help="Размеры m1,n1,m2,n2"),
        ),
    ),
}


def _usage() -> str:
    commands = ", ".join(COMMAND_HANDLERS)
    return f"Использование: matchup-hub <команда> [флаги]\nКоманды: {commands}"


def run_command(argv: list[str]) -> CommandOutcome:
    """
    Распарсить и выполнить команду.

    Args:
        argv: Имя команды и её флаги

    Returns:
        Результат выполнения команды
    """
    if not argv or argv[0] in ("-h", "--help", "help"):
        return CommandOutcome(_usage(), 0 if argv else 2)

    command, rest = argv[0], argv[1:]
    if command not in COMMAND_HANDLERS:
        return CommandOutcome(f"Неизвестная команда: {command}\n{_usage()}", 2)

    handler, setup_parser = COMMAND_HANDLERS[command]
    parser = argparse.ArgumentParser(prog=f"matchup-hub {command}", exit_on_error=False)
    setup_parser(parser)
    try:
        parsed_args = parser.parse_args(rest)
    except argparse.ArgumentError as e:
        return CommandOutcome(f"Ошибка в аргументах команды: {e}", 2)
    except SystemExit as e:
        # --help завершает разбор с кодом 0, прочие ошибки argparse: с 2
        return CommandOutcome("", 0 if e.code in (0, None) else 2)
    return handler(parsed_args)


def main_cli(argv: list[str] | None = None) -> int:
    """Главная функция CLI интерфейса."""
    outcome = run_command(list(sys.argv[1:] if argv is None else argv))
    if outcome.text:
        print(outcome.text, file=sys.stdout if outcome.ok else sys.stderr)
    return outcome.exit_code
