"""Схема входных таблиц и пороги отбора игроков."""

from dataclasses import dataclass, field
from pathlib import Path

BATTING_FILE = "batting.csv"
PITCHING_FILE = "pitching.csv"
MATCHUPS_FILE = "matchups.csv"


@dataclass
class IngestConfig:
    """
    Конфигурация загрузки сезона.

    Все файлы: UTF-8 CSV с заголовком в первой строке, идентификаторы
    игроков читаются как строки.
    """

    BATTER_ID: str = "batter_id"
    PITCHER_ID: str = "pitcher_id"
    NAME: str = "name"

    # Показатели отбивающих (столбцы Z), делятся на pa
    BATTING_STATS: tuple = (
        "g", "ab", "r", "h", "doubles", "triples", "hr", "rbi", "sb",
        "cs", "bb", "so", "tb", "gidp", "hbp", "sh", "sf", "ibb",
    )
    BATTING_EXPOSURE: str = "pa"

    # Показатели питчеров (строки Y), делятся на bf
    PITCHING_STATS: tuple = (
        "w", "l", "g", "gs", "gf", "cg", "sho", "sv", "ip", "h",
        "r", "er", "hr", "bb", "ibb", "so", "hbp", "bk", "wp",
    )
    PITCHING_EXPOSURE: str = "bf"

    MATCHUP_COLUMNS: tuple = ("batter_id", "pitcher_id", "ab", "h")

    # Пороги: ip строго больше, ab не меньше
    MIN_INNINGS: float = 20.0
    MIN_AT_BATS: int = 50

    FILES: dict = field(
        default_factory=lambda: {
            "batting": BATTING_FILE,
            "pitching": PITCHING_FILE,
            "matchups": MATCHUPS_FILE,
        }
    )

    @property
    def batting_columns(self) -> tuple:
        """Обязательные столбцы batting.csv."""
        return (self.BATTER_ID, self.BATTING_EXPOSURE, *self.BATTING_STATS)

    @property
    def pitching_columns(self) -> tuple:
        """Обязательные столбцы pitching.csv."""
        return (self.PITCHER_ID, self.PITCHING_EXPOSURE, *self.PITCHING_STATS)

    def table_path(self, data_dir: str | Path, table: str) -> Path:
        """Путь к таблице в каталоге данных."""
        return Path(data_dir) / self.FILES[table]


config = IngestConfig()
