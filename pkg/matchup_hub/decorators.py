"""Декораторы: журналирование действий, обработка ошибок, проверки аргументов."""

from __future__ import annotations

import time
from dataclasses import dataclass
from functools import wraps
from typing import Any, Callable, TypeVar

F = TypeVar("F", bound=Callable[..., Any])


@dataclass(frozen=True)
class CommandOutcome:
    """Результат команды CLI: текст для вывода и код завершения."""

    text: str
    exit_code: int = 0

    @property
    def ok(self) -> bool:
        """True при нулевом коде завершения."""
        return self.exit_code == 0


def validate_rank(func: F) -> F:
    """
    Декоратор для проверки ранга в аргументах.

    Ранг (rank или ranks) должен быть целым ≥ 1. Строки вида "3" и "1,2,3"
    приводятся к int и кортежу int.

    Args:
        func: Функция с аргументом rank или ranks

    Returns:
        Обёрнутая функция
    """
    from matchup_hub.core.exceptions import UsageError

    def parse(value: Any) -> int:
        try:
            number = int(str(value).strip())
        except ValueError:
            raise UsageError("rank", value, "целые числа ≥ 1")
        if number < 1:
            raise UsageError("rank", value, "целые числа ≥ 1")
        return number

    @wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        if kwargs.get("rank") is not None:
            kwargs["rank"] = parse(kwargs["rank"])
        if kwargs.get("ranks") is not None:
            ranks = kwargs["ranks"]
            if isinstance(ranks, str):
                ranks = [item for item in ranks.split(",") if item.strip()]
            kwargs["ranks"] = tuple(parse(item) for item in ranks)
        return func(*args, **kwargs)

    return wrapper  # type: ignore


def handle_errors(func: F) -> F:
    """
    Декоратор для обработки ошибок команд CLI с понятными сообщениями.

    Ошибки использования дают код 2, прочие ожидаемые ошибки: код 1.

    Args:
        func: Обработчик команды, возвращающий CommandOutcome

    Returns:
        Обёрнутая функция
    """
    from matchup_hub.core.exceptions import (
        ConfigError,
        MatchupHubError,
        UsageError,
    )

    @wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> CommandOutcome:
        try:
            return func(*args, **kwargs)
        except (UsageError, ConfigError) as e:
            return CommandOutcome(str(e), 2)
        except MatchupHubError as e:
            return CommandOutcome(str(e), 1)
        except ValueError as e:
            return CommandOutcome(str(e), 2)
        except KeyError as e:
            return CommandOutcome(f"Отсутствует обязательный параметр: {e}", 2)
        except OSError as e:
            return CommandOutcome(f"Ошибка ввода-вывода: {e}", 1)

    return wrapper  # type: ignore


def log_action(action_name: str | None = None):
    """
    Декоратор для журналирования крупных операций конвейера.

    В actions.log пишется строка вида
    action=IMPUTE method='glmf' rank=3 shape=200x200 result=OK
    iterations=12 converged=True duration=1.234s,
    а при исключении: result=ERROR с типом и текстом ошибки; исключение
    пробрасывается дальше.

    Args:
        action_name: Имя действия (по умолчанию имя функции)

    Returns:
        Декоратор
    """
    from matchup_hub.logging_config import get_action_logger

    def decorator(func: F) -> F:
        action = (action_name or func.__name__).upper()

        @wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            logger = get_action_logger()
            context = _extract_context(args, kwargs)
            started = time.perf_counter()
            try:
                result = func(*args, **kwargs)
            except Exception as e:
                log_parts = [f"action={action}", *context]
                log_parts.extend(
                    [
                        "result=ERROR",
                        f"error_type={type(e).__name__}",
                        f"error_message='{e}'",
                    ]
                )
                logger.error(" ".join(log_parts))
                raise

            log_parts = [f"action={action}", *context, "result=OK"]
            log_parts.extend(_extract_outcome(result))
            log_parts.append(f"duration={time.perf_counter() - started:.3f}s")
            logger.info(" ".join(log_parts))
            return result

        return wrapper  # type: ignore

    return decorator


def _extract_context(args: tuple, kwargs: dict) -> list[str]:
    """Метод, ранг и размеры набора из аргументов."""
    from matchup_hub.core.baselines import Method
    from matchup_hub.core.models import LinkedDataset

    parts: list[str] = []
    values = list(args) + list(kwargs.values())

    method = kwargs.get("method")
    if method is None:
        method = next((v for v in values if isinstance(v, Method)), None)
    if method is not None:
        parts.append(f"method='{getattr(method, 'value', method)}'")

    rank = kwargs.get("rank")
    if rank is None and len(args) >= 3 and isinstance(args[2], int):
        rank = args[2]
    if rank is not None:
        parts.append(f"rank={rank}")

    dataset = next((v for v in values if isinstance(v, LinkedDataset)), None)
    if dataset is not None:
        m1, n1, _, _ = dataset.dims
        parts.append(f"shape={m1}x{n1}")
        parts.append(f"observed={int(dataset.mask.sum())}")
    return parts


def _extract_outcome(result: Any) -> list[str]:
    """Итоговые показатели из результата, если он их содержит."""
    parts = []
    for name in ("iterations", "converged"):
        if hasattr(result, name):
            parts.append(f"{name}={getattr(result, name)}")
    if isinstance(result, list):
        parts.append(f"records={len(result)}")
    return parts
