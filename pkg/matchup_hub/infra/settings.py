"""Singleton для загрузки конфигурации."""

import os
from pathlib import Path
from typing import Any

from matchup_hub.core.exceptions import ConfigError

# Попытка импорта tomllib (встроен в Python 3.11+)
_tomllib_available = False
try:
    import tomllib  # type: ignore

    _tomllib_available = True
except ImportError:
    try:
        import tomli as tomllib  # type: ignore

        _tomllib_available = True
    except ImportError:
        tomllib = None  # type: ignore

DATA_DIR_ENV = "MATCHUP_HUB_DATA_DIR"

DEFAULTS: dict[str, Any] = {
    # Пути
    "data_dir": "data",
    "output_dir": "output",
    "logs_dir": "logs",
    # Логирование
    "log_level": "INFO",
    "log_file": "matchup_hub.log",
    "log_format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    "log_date_format": "%Y-%m-%d %H:%M:%S",
    "log_max_bytes": 10 * 1024 * 1024,
    "log_backup_count": 5,
    # Импутация и подгонка
    "clip_lower": 0.001,
    "clip_upper": 0.999,
    "impute_tolerance": 1e-4,
    "impute_max_iter": 100,
    "outer_tolerance": 1e-5,
    "max_outer_iter": 200,
    "irls_tolerance": 1e-6,
    "irls_max_iter": 100,
    # Эксперименты
    "folds": 5,
    "ranks": [1, 2, 3],
    "sigmas": [0.1, 0.3, 0.5, 0.7],
    "nmaxes": [1, 2, 8, 16],
    "replicates": 3,
    "master_seed": 2017,
    "jobs": 1,
}

_PATH_KEYS = ("data_dir", "output_dir", "logs_dir")


def _read_toml(path: Path) -> dict[str, Any]:
    if not _tomllib_available:
        return {}
    with open(path, "rb") as f:
        return tomllib.load(f)  # type: ignore


class SettingsLoader:
    """
    Singleton для загрузки и хранения настроек приложения.

    Порядок источников (последний побеждает): встроенные значения,
    таблица [tool.matchup_hub] в pyproject.toml, переменная окружения
    MATCHUP_HUB_DATA_DIR. Файл --config подмешивается через merged().
    """

    _instance: "SettingsLoader | None" = None
    _initialized: bool = False

    def __new__(cls) -> "SettingsLoader":
        """Создать единственный экземпляр SettingsLoader."""
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self) -> None:
        """Инициализация настроек (выполняется только один раз)."""
        if self._initialized:
            return

        self._base_dir = Path(__file__).parent.parent.parent
        self._settings: dict[str, Any] = {}
        self._load()
        self._initialized = True

    def _load(self) -> None:
        """Собрать настройки из всех источников."""
        self._settings = dict(DEFAULTS)
        self._settings.update(self._load_from_pyproject())
        env_dir = os.environ.get(DATA_DIR_ENV)
        if env_dir:
            self._settings["data_dir"] = env_dir

    def _load_from_pyproject(self) -> dict[str, Any]:
        """Прочитать таблицу [tool.matchup_hub] из pyproject.toml."""
        pyproject_path = self._base_dir / "pyproject.toml"
        if not pyproject_path.exists():
            return {}
        try:
            data = _read_toml(pyproject_path)
        except (KeyError, ValueError, OSError):
            return {}
        return dict(data.get("tool", {}).get("matchup_hub", {}))

    def _path(self, key: str) -> Path:
        path = Path(self._settings[key])
        return path if path.is_absolute() else self._base_dir / path

    def get(self, key: str, default: Any = None) -> Any:
        """
        Получить настройку по ключу.

        Args:
            key: Ключ настройки
            default: Значение по умолчанию, если ключ не найден

        Returns:
            Значение настройки или default (для путей: Path)
        """
        if key in _PATH_KEYS:
            return self._path(key)
        return self._settings.get(key, default)

    def merged(self, config_path: str | Path | None = None) -> dict[str, Any]:
        """
        Настройки с подмешанным пользовательским файлом конфигурации.

        Ключи файла читаются с верхнего уровня или из [tool.matchup_hub].
        Неизвестные ключи отвергаются.

        Args:
            config_path: Путь к TOML-файлу (None: только текущие настройки)

        Returns:
            Новый словарь настроек; сам singleton не меняется

        Raises:
            ConfigError: Если файл не читается или содержит неизвестные ключи
        """
        result = dict(self._settings)
        if config_path is None:
            return result

        path = Path(config_path)
        if not path.exists():
            raise ConfigError(f"Файл конфигурации не найден: {path}")
        try:
            data = _read_toml(path)
        except (ValueError, OSError) as e:
            raise ConfigError(f"Не удалось прочитать {path}: {e}")

        overrides = data.get("tool", {}).get("matchup_hub", data)
        unknown = sorted(set(overrides) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"Неизвестные ключи конфигурации: {', '.join(unknown)}")
        result.update(overrides)
        return result

    def reload(self) -> None:
        """Перезагрузить конфигурацию из pyproject.toml и окружения."""
        self._load()

    @property
    def base_dir(self) -> Path:
        """Получить базовую директорию проекта."""
        return self._base_dir

    @property
    def data_dir(self) -> Path:
        """Получить директорию с входными таблицами."""
        return self._path("data_dir")

    @property
    def output_dir(self) -> Path:
        """Получить директорию для результатов."""
        return self._path("output_dir")

    @property
    def logs_dir(self) -> Path:
        """Получить директорию с логами."""
        return self._path("logs_dir")

    @property
    def log_level(self) -> str:
        """Получить уровень логирования."""
        return str(self._settings["log_level"])

    @property
    def log_file(self) -> str:
        """Получить имя файла лога."""
        return str(self._settings["log_file"])

    @property
    def log_format(self) -> str:
        """Получить формат строк лога."""
        return str(self._settings["log_format"])

    @property
    def log_date_format(self) -> str:
        """Получить формат даты в логе."""
        return str(self._settings["log_date_format"])

    @property
    def log_max_bytes(self) -> int:
        """Получить максимальный размер файла лога."""
        return int(self._settings["log_max_bytes"])

    @property
    def log_backup_count(self) -> int:
        """Получить количество резервных файлов лога."""
        return int(self._settings["log_backup_count"])

    @property
    def clip_bounds(self) -> tuple[float, float]:
        """Границы ограничения вероятностей."""
        return float(self._settings["clip_lower"]), float(self._settings["clip_upper"])

    @property
    def master_seed(self) -> int:
        """Главное зерно экспериментов."""
        return int(self._settings["master_seed"])


# Глобальный экземпляр для удобного доступа
settings = SettingsLoader()
