"""Пакет matchup_hub: GLMF и импутация вероятностей в матчапах отбивающий/питчер."""

__version__ = "0.1.0"
