"""Чтение таблиц сезона, отбор игроков, масштабирование и сборка набора."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from matchup_hub.core.exceptions import IngestError, MissingTableError
from matchup_hub.core.models import LinkedDataset
from matchup_hub.decorators import log_action
from matchup_hub.ingest.config import IngestConfig, config

logger = logging.getLogger(__name__)


@dataclass
class RawTables:
    """Три исходные таблицы сезона."""

    batters: pd.DataFrame
    pitchers: pd.DataFrame
    matchups: pd.DataFrame


@dataclass
class ScaledBlocks:
    """
    Масштабированные блоки ковариат.

    Y: показатели × питчеры (делит столбцы с X),
    Z: отбивающие × показатели (делит строки с X).
    """

    Y: np.ndarray
    Z: np.ndarray
    batter_ids: tuple[str, ...]
    pitcher_ids: tuple[str, ...]
    y_labels: tuple[str, ...]
    z_labels: tuple[str, ...]


def parse_innings(value: object) -> float:
    """
    Разобрать подачи в бейсбольной записи: 20.1 = 20⅓, 20.2 = 20⅔.

    Raises:
        IngestError: Если дробная часть не 0, 1 или 2
    """
    text = str(value).strip()
    if not text or text.lower() == "nan":
        raise IngestError("Пустое значение ip")
    whole, _, fraction = text.partition(".")
    fraction = fraction.rstrip("0") or "0"
    if fraction not in ("0", "1", "2"):
        raise IngestError(f"Некорректная запись подач '{text}': после точки ожидается 0, 1 или 2")
    try:
        return int(whole or 0) + int(fraction) / 3.0
    except ValueError:
        raise IngestError(f"Некорректная запись подач '{text}'")


def _read_table(
    data_dir: Path, table: str, columns: tuple, cfg: IngestConfig, dtype: dict
) -> pd.DataFrame:
    path = cfg.table_path(data_dir, table)
    if not path.exists():
        raise MissingTableError(table, str(path))
    try:
        frame = pd.read_csv(path, dtype=dtype, encoding="utf-8")
    except (OSError, ValueError, pd.errors.ParserError) as e:
        raise IngestError(f"Не удалось прочитать {path}: {e}") from e
    absent = [column for column in columns if column not in frame.columns]
    if absent:
        raise IngestError(f"В таблице '{table}' нет столбцов: {', '.join(absent)}")
    return frame


def read_tables(data_dir: str | Path, cfg: IngestConfig = config) -> RawTables:
    """
    Прочитать batting.csv, pitching.csv и matchups.csv.

    Args:
        data_dir: Каталог с таблицами
        cfg: Схема таблиц

    Returns:
        Исходные таблицы

    Raises:
        MissingTableError: Если таблицы нет (с её именем)
        IngestError: Если нет обязательных столбцов или нарушено h ≤ ab
    """
    data_dir = Path(data_dir)
    batters = _read_table(
        data_dir, "batting", cfg.batting_columns, cfg, {cfg.BATTER_ID: str}
    )
    pitchers = _read_table(
        data_dir,
        "pitching",
        cfg.pitching_columns,
        cfg,
        {cfg.PITCHER_ID: str, "ip": str},
    )
    matchups = _read_table(
        data_dir,
        "matchups",
        cfg.MATCHUP_COLUMNS,
        cfg,
        {cfg.BATTER_ID: str, cfg.PITCHER_ID: str},
    )
    pitchers["ip"] = pitchers["ip"].map(parse_innings)

    ab, h = matchups["ab"], matchups["h"]
    if (ab < 0).any() or (h < 0).any() or (h > ab).any():
        raise IngestError("В matchups.csv нарушено 0 ≤ h ≤ ab")
    return RawTables(batters=batters, pitchers=pitchers, matchups=matchups)


def _collapse_players(frame: pd.DataFrame, key: str, columns: tuple) -> pd.DataFrame:
    """Сложить повторяющиеся строки игрока (например, после обмена)."""
    if not frame[key].duplicated().any():
        return frame
    duplicates = int(frame[key].duplicated().sum())
    logger.warning(f"{duplicates} повторных строк игроков по '{key}' сложены")
    numeric = [column for column in columns if column != key]
    summed = frame.groupby(key, sort=False)[numeric].sum()
    if "name" in frame.columns:
        summed.insert(0, "name", frame.groupby(key, sort=False)["name"].first())
    return summed.reset_index()


def filter_rosters(raw: RawTables, cfg: IngestConfig = config) -> RawTables:
    """
    Отобрать питчеров с ip > 20 и отбивающих с ab ≥ 50.

    Игроки с нулевой экспозицией (bf или pa) отбрасываются с
    предупреждением; записи matchups с выбывшими игроками удаляются.

    Args:
        raw: Исходные таблицы
        cfg: Пороги отбора

    Returns:
        Отфильтрованные таблицы

    Raises:
        IngestError: Если после отбора не осталось игроков или встреч
    """
    batters = _collapse_players(raw.batters, cfg.BATTER_ID, cfg.batting_columns)
    pitchers = _collapse_players(raw.pitchers, cfg.PITCHER_ID, cfg.pitching_columns)

    batters = batters[batters["ab"] >= cfg.MIN_AT_BATS]
    pitchers = pitchers[pitchers["ip"] > cfg.MIN_INNINGS]

    for name, frame, exposure in (
        ("batting", batters, cfg.BATTING_EXPOSURE),
        ("pitching", pitchers, cfg.PITCHING_EXPOSURE),
    ):
        zero = int((frame[exposure] <= 0).sum())
        if zero:
            logger.warning(f"{name}: {zero} игроков с {exposure} ≤ 0 отброшены")
    batters = batters[batters[cfg.BATTING_EXPOSURE] > 0]
    pitchers = pitchers[pitchers[cfg.PITCHING_EXPOSURE] > 0]

    if batters.empty or pitchers.empty:
        raise IngestError("После отбора не осталось отбивающих или питчеров")

    matchups = raw.matchups[
        raw.matchups[cfg.BATTER_ID].isin(batters[cfg.BATTER_ID])
        & raw.matchups[cfg.PITCHER_ID].isin(pitchers[cfg.PITCHER_ID])
    ]
    logger.info(
        f"rosters batters={len(batters)} pitchers={len(pitchers)} "
        f"matchup_records={len(matchups)}"
    )
    return RawTables(
        batters=batters.reset_index(drop=True),
        pitchers=pitchers.reset_index(drop=True),
        matchups=matchups.reset_index(drop=True),
    )


def _standardize(scaled: pd.DataFrame, table: str) -> pd.DataFrame:
    """Стандартизовать столбцы; постоянные столбцы удаляются."""
    spread = scaled.std(ddof=1)
    constant = spread.index[~(spread > 0)].tolist()
    if constant:
        logger.warning(
            f"{table}: постоянные показатели исключены: {', '.join(constant)}"
        )
        scaled = scaled.drop(columns=constant)
        spread = spread.drop(constant)
    if scaled.shape[1] == 0:
        raise IngestError(f"{table}: не осталось ни одного показателя")
    return (scaled - scaled.mean()) / spread


def scale_covariates(rosters: RawTables, cfg: IngestConfig = config) -> ScaledBlocks:
    """
    Масштабировать показатели игроков и построить блоки Y и Z.

    Показатели делятся на экспозицию (bf у питчеров, pa у отбивающих) и
    стандартизуются по столбцам. Игроки упорядочиваются по идентификатору.

    Raises:
        IngestError: Если у игрока нулевая экспозиция
    """
    blocks = {}
    for table, frame, key, stats, exposure in (
        ("batting", rosters.batters, cfg.BATTER_ID, cfg.BATTING_STATS, cfg.BATTING_EXPOSURE),
        ("pitching", rosters.pitchers, cfg.PITCHER_ID, cfg.PITCHING_STATS, cfg.PITCHING_EXPOSURE),
    ):
        frame = frame.sort_values(key, kind="stable").set_index(key)
        if (frame[exposure] <= 0).any():
            raise IngestError(f"{table}: нулевая экспозиция {exposure}")
        scaled = frame[list(stats)].astype(float).div(frame[exposure].astype(float), axis=0)
        blocks[table] = _standardize(scaled, table)

    batting, pitching = blocks["batting"], blocks["pitching"]
    return ScaledBlocks(
        Y=pitching.to_numpy().T,
        Z=batting.to_numpy(),
        batter_ids=tuple(str(v) for v in batting.index),
        pitcher_ids=tuple(str(v) for v in pitching.index),
        y_labels=tuple(pitching.columns),
        z_labels=tuple(batting.columns),
    )


def assemble(
    filtered: RawTables, scaled: ScaledBlocks, cfg: IngestConfig = config
) -> LinkedDataset:
    """
    Собрать связанный набор: X: отбивающие × питчеры.

    Повторные записи пары суммируются. Ячейки без встреч (ab = 0)
    получают заглушки X = 0, N = 1 и считаются пропусками.

    Raises:
        IngestError: Если после суммирования h > ab или идентификаторы
            не согласованы с блоками ковариат
    """
    batter_index = pd.Index(scaled.batter_ids)
    pitcher_index = pd.Index(scaled.pitcher_ids)

    totals = filtered.matchups.groupby(
        [cfg.BATTER_ID, cfg.PITCHER_ID], sort=True
    )[["ab", "h"]].sum()
    if (totals["h"] > totals["ab"]).any():
        raise IngestError("Суммы повторных записей противоречат друг другу: h > ab")
    totals = totals[totals["ab"] >= 1]

    rows = batter_index.get_indexer(totals.index.get_level_values(0))
    cols = pitcher_index.get_indexer(totals.index.get_level_values(1))
    if (rows < 0).any() or (cols < 0).any():
        raise IngestError("Идентификаторы в matchups не найдены среди отобранных игроков")

    shape = (len(batter_index), len(pitcher_index))
    X = np.zeros(shape)
    N = np.ones(shape)
    mask = np.zeros(shape, dtype=bool)
    X[rows, cols] = totals["h"].to_numpy(dtype=float)
    N[rows, cols] = totals["ab"].to_numpy(dtype=float)
    mask[rows, cols] = True

    dataset = LinkedDataset(
        X=X,
        Y=scaled.Y,
        Z=scaled.Z,
        N=N,
        mask=mask,
        row_labels=scaled.batter_ids,
        col_labels=scaled.pitcher_ids,
        y_labels=scaled.y_labels,
        z_labels=scaled.z_labels,
    )
    _audit_orientation(dataset, scaled)
    logger.info(
        f"assembled shape={shape[0]}x{shape[1]} observed={int(mask.sum())} "
        f"share={mask.mean():.3f}"
    )
    return dataset


def _audit_orientation(dataset: LinkedDataset, scaled: ScaledBlocks) -> None:
    """Y делит метки столбцов с X (питчеры), Z: метки строк (отбивающие)."""
    if dataset.col_labels != scaled.pitcher_ids or dataset.Y.shape[1] != len(scaled.pitcher_ids):
        raise IngestError("Столбцы Y не совпадают с питчерами X")
    if dataset.row_labels != scaled.batter_ids or dataset.Z.shape[0] != len(scaled.batter_ids):
        raise IngestError("Строки Z не совпадают с отбивающими X")


@log_action("INGEST")
def load_season(data_dir: str | Path, cfg: IngestConfig = config) -> LinkedDataset:
    """
    Полный путь от CSV до связанного набора.

    Args:
        data_dir: Каталог с batting.csv, pitching.csv, matchups.csv
        cfg: Схема и пороги

    Returns:
        Связанный набор данных
    """
    raw = read_tables(data_dir, cfg)
    filtered = filter_rosters(raw, cfg)
    scaled = scale_covariates(filtered, cfg)
    return assemble(filtered, scaled, cfg)
