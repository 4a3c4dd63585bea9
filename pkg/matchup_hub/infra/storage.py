"""Хранилище артефактов запуска: JSON и CSV с атомарной записью."""

from __future__ import annotations

import json
import tempfile
from pathlib import Path
from typing import Any, Callable

import numpy as np
import pandas as pd

from matchup_hub.core.exceptions import StorageError

FLOAT_FORMAT = "%.17g"


def _to_builtin(value: Any) -> Any:
    """Привести numpy-значения к типам, которые понимает json."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Тип {type(value).__name__} не сериализуется в JSON")


class ArtifactStore:
    """Каталог с артефактами одной команды (манифест, таблицы, матрицы)."""

    def __init__(self, root: str | Path):
        """
        Инициализация хранилища.

        Args:
            root: Каталог артефактов (создаётся при первой записи)
        """
        self.root = Path(root)

    def path(self, name: str) -> Path:
        """Полный путь к артефакту."""
        return self.root / name

    def exists(self, name: str) -> bool:
        """True, если артефакт существует."""
        return self.path(name).exists()

    def _atomic_write(self, name: str, writer: Callable[[Any], None]) -> Path:
        """
        Записать файл через временный файл и замену.

        Raises:
            StorageError: Если запись не удалась
        """
        target = self.path(name)
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            with tempfile.NamedTemporaryFile(
                mode="w",
                encoding="utf-8",
                dir=target.parent,
                delete=False,
                newline="",
                suffix=".tmp",
            ) as tmp_file:
                writer(tmp_file)
                tmp_path = Path(tmp_file.name)
            tmp_path.replace(target)
        except (OSError, TypeError) as e:
            raise StorageError(f"Ошибка сохранения {target}: {e}") from e
        return target

    def write_json(self, name: str, data: Any) -> Path:
        """
        Сохранить данные в JSON (indent 2, UTF-8, ключи по порядку вставки).

        Returns:
            Путь к файлу
        """

        def writer(f) -> None:
            json.dump(data, f, indent=2, ensure_ascii=False, default=_to_builtin)
            f.write("\n")

        return self._atomic_write(name, writer)

    def read_json(self, name: str) -> Any:
        """
        Загрузить данные из JSON.

        Raises:
            StorageError: Если файла нет или он повреждён
        """
        target = self.path(name)
        try:
            with open(target, "r", encoding="utf-8") as f:
                return json.load(f)
        except (json.JSONDecodeError, OSError) as e:
            raise StorageError(f"Ошибка загрузки файла {target}: {e}") from e

    def write_frame(
        self, name: str, frame: pd.DataFrame, float_format: str = FLOAT_FORMAT
    ) -> Path:
        """Сохранить таблицу в CSV без индекса."""
        return self._atomic_write(
            name,
            lambda f: frame.to_csv(f, index=False, float_format=float_format),
        )

    def read_frame(self, name: str, **kwargs: Any) -> pd.DataFrame:
        """
        Прочитать таблицу из CSV.

        Raises:
            StorageError: Если файла нет или он не разбирается
        """
        target = self.path(name)
        try:
            return pd.read_csv(target, **kwargs)
        except (OSError, ValueError, pd.errors.ParserError) as e:
            raise StorageError(f"Ошибка загрузки файла {target}: {e}") from e

    def write_matrix(
        self,
        name: str,
        matrix: np.ndarray,
        row_labels: tuple[str, ...] | None = None,
        col_labels: tuple[str, ...] | None = None,
        index_name: str = "id",
    ) -> Path:
        """
        Сохранить матрицу в CSV с метками строк и столбцов.

        Без меток используются номера 0..n-1.
        """
        matrix = np.asarray(matrix, dtype=float)
        rows = row_labels or [str(i) for i in range(matrix.shape[0])]
        cols = col_labels or [str(j) for j in range(matrix.shape[1])]
        frame = pd.DataFrame(matrix, index=pd.Index(rows, name=index_name), columns=cols)
        return self._atomic_write(
            name, lambda f: frame.to_csv(f, float_format=FLOAT_FORMAT)
        )

    def read_matrix(self, name: str) -> tuple[np.ndarray, tuple[str, ...], tuple[str, ...]]:
        """
        Прочитать матрицу, сохранённую write_matrix.

        Returns:
            Кортеж (матрица, метки строк, метки столбцов)
        """
        frame = self.read_frame(name, index_col=0, dtype=str)
        try:
            matrix = frame.astype(float).to_numpy()
        except ValueError as e:
            raise StorageError(f"Нечисловые значения в {self.path(name)}: {e}") from e
        rows = tuple(str(v) for v in frame.index)
        cols = tuple(str(v) for v in frame.columns)
        return matrix, rows, cols
