"""Точка входа в проект."""

import sys

from matchup_hub.cli.interface import main_cli
from matchup_hub.logging_config import setup_logging


def main():
    """Главная функция для запуска проекта."""
    # Инициализация логирования (уровень из настроек)
    setup_logging()

    # Запуск CLI
    sys.exit(main_cli())


if __name__ == "__main__":
    main()
