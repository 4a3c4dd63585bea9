"""Пользовательские исключения для проекта."""


class MatchupHubError(Exception):
    """Базовое исключение для всех ошибок matchup_hub."""

    pass


class DomainError(MatchupHubError):
    """Значение вне области определения семейства распределений."""

    def __init__(self, family: str, reason: str):
        """
        Инициализация исключения.

        Args:
            family: Имя семейства (normal, binomial, poisson)
            reason: Описание нарушения
        """
        message = f"Нарушена область определения семейства '{family}': {reason}"
        super().__init__(message)
        self.family = family
        self.reason = reason


class DimensionError(MatchupHubError):
    """Несогласованные размеры связанных блоков."""

    pass


class DataValidationError(MatchupHubError):
    """Некорректное содержимое набора данных."""

    pass


class IrlsError(MatchupHubError):
    """Неустранимая ошибка решателя IRLS."""

    pass


class FitError(MatchupHubError):
    """Ошибка конфигурации или выполнения подгонки факторизации."""

    pass


class ImputationError(MatchupHubError):
    """Ошибка импутации пропущенных значений."""

    pass


class IngestError(MatchupHubError):
    """Ошибка загрузки исходных таблиц."""

    pass


class MissingTableError(IngestError):
    """Отсутствует входная таблица."""

    def __init__(self, table: str, path: str):
        """
        Инициализация исключения.

        Args:
            table: Имя таблицы (batting, pitching, matchups)
            path: Ожидаемый путь к файлу
        """
        message = f"Не найдена таблица '{table}': {path}"
        super().__init__(message)
        self.table = table
        self.path = path


class StorageError(MatchupHubError):
    """Ошибка чтения или записи артефактов."""

    pass


class ConfigError(MatchupHubError):
    """Некорректная конфигурация."""

    pass


class UsageError(ConfigError):
    """Некорректные аргументы командной строки."""

    def __init__(self, option: str, value: object, valid: object | None = None):
        """
        Инициализация исключения.

        Args:
            option: Имя параметра командной строки
            value: Переданное значение
            valid: Допустимые значения (если есть конечный набор)
        """
        message = f"Недопустимое значение {option}: {value}"
        if valid is not None:
            message += f". Допустимые значения: {valid}"
        super().__init__(message)
        self.option = option
        self.value = value
        self.valid = valid
