"""
Синтетическая лига в схеме batting.csv / pitching.csv / matchups.csv.

Скрытая структура (компоненты U, V, U_y, V_z) берётся из simgen:
вероятности встреч p = logit⁻¹(logit(0.25) + U Vᵀ), интенсивности
показателей питчеров модулируются Θ_Y, отбивающих: Θ_Z. Кроме основного
состава добавляются игроки, не проходящие пороги отбора.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.special import expit, logit

from matchup_hub.core.exceptions import ConfigError
from matchup_hub.core.simgen import SimulationConfig, generate
from matchup_hub.infra.storage import ArtifactStore
from matchup_hub.ingest.config import IngestConfig, config
from matchup_hub.ingest.loader import RawTables

logger = logging.getLogger(__name__)

LEAGUE_AVERAGE = 0.25

# Частоты на одно выступление
BATTING_RATES = {
    "r": 0.12, "rbi": 0.11, "sb": 0.015, "cs": 0.005, "bb": 0.085,
    "so": 0.21, "gidp": 0.02, "hbp": 0.01, "sh": 0.003, "sf": 0.007,
    "ibb": 0.006,
}
PITCHING_RATES = {
    "w": 0.012, "l": 0.012, "g": 0.08, "gs": 0.03, "gf": 0.02,
    "cg": 0.0005, "sho": 0.0003, "sv": 0.008, "h": 0.22, "r": 0.12,
    "er": 0.11, "hr": 0.03, "bb": 0.08, "ibb": 0.006, "so": 0.21,
    "hbp": 0.01, "bk": 0.001, "wp": 0.009,
}
# Доли одиночных, двойных, тройных и хоум-ранов среди хитов
HIT_TYPES = (0.65, 0.2, 0.02, 0.13)


@dataclass(frozen=True)
class LeagueConfig:
    """Параметры синтетической лиги."""

    batters: int = 508
    pitchers: int = 516
    fringe_batters: int = 40
    fringe_pitchers: int = 40
    observed_fraction: float = 0.24
    rank: int = 3
    sigma: float = 0.35
    max_at_bats: int = 5
    seed: int = 2017

    def __post_init__(self) -> None:
        """Проверить параметры."""
        if self.batters < 2 or self.pitchers < 2:
            raise ConfigError("В лиге должно быть хотя бы по два отбивающих и питчера")
        if self.fringe_batters < 0 or self.fringe_pitchers < 0:
            raise ConfigError("Число игроков вне состава не может быть отрицательным")
        if not 0 < self.observed_fraction <= 1:
            raise ConfigError("Доля наблюдаемых встреч должна лежать в (0, 1]")


def _modulated_counts(
    rng: np.random.Generator,
    exposure: np.ndarray,
    rates: dict[str, float],
    theta: np.ndarray,
) -> dict[str, np.ndarray]:
    """Пуассоновские счётчики exposure · rate · exp(θ / 2) по столбцам θ."""
    counts = {}
    for k, (name, rate) in enumerate(rates.items()):
        intensity = exposure * rate * np.exp(0.5 * theta[:, k % theta.shape[1]])
        counts[name] = rng.poisson(intensity)
    return counts


def _batting_table(
    rng: np.random.Generator,
    ids: list[str],
    averages: np.ndarray,
    theta_Z: np.ndarray,
    core: int,
) -> pd.DataFrame:
    total = len(ids)
    pa = np.concatenate(
        [rng.integers(150, 700, size=core), rng.integers(5, 45, size=total - core)]
    )
    counts = _modulated_counts(rng, pa, BATTING_RATES, theta_Z)
    walks = counts["bb"] + counts["hbp"] + counts["sh"] + counts["sf"]
    walks = np.minimum(walks, pa // 4)
    ab = pa - walks
    h = rng.binomial(ab, averages)
    hit_types = rng.multinomial(h, HIT_TYPES)
    doubles, triples, hr = (hit_types[:, k] for k in (1, 2, 3))
    frame = pd.DataFrame(
        {
            "batter_id": ids,
            "name": [f"Batter {i + 1}" for i in range(total)],
            "g": np.minimum(162, pa // 4 + rng.integers(0, 10, size=total)),
            "ab": ab,
            "pa": pa,
            "h": h,
            "doubles": doubles,
            "triples": triples,
            "hr": hr,
            "tb": h + doubles + 2 * triples + 3 * hr,
            **counts,
        }
    )
    return frame[["batter_id", "name", *config.batting_columns[1:]]]


def _pitching_table(
    rng: np.random.Generator,
    ids: list[str],
    theta_Y: np.ndarray,
    core: int,
) -> pd.DataFrame:
    total = len(ids)
    bf = np.concatenate(
        [rng.integers(100, 900, size=core), rng.integers(10, 80, size=total - core)]
    )
    outs = np.round(bf * 0.7).astype(int)
    counts = _modulated_counts(rng, bf, PITCHING_RATES, theta_Y.T)
    counts["er"] = np.minimum(counts["er"], counts["r"])
    frame = pd.DataFrame(
        {
            "pitcher_id": ids,
            "name": [f"Pitcher {j + 1}" for j in range(total)],
            "ip": [f"{o // 3}.{o % 3}" for o in outs],
            "bf": bf,
            **counts,
        }
    )
    return frame[["pitcher_id", "name", *config.pitching_columns[1:]]]


def generate_league(cfg: LeagueConfig | None = None) -> RawTables:
    """
    Сгенерировать таблицы синтетической лиги.

    После отбора остаются ровно cfg.batters отбивающих и cfg.pitchers
    питчеров, а доля наблюдаемых пар основного состава равна
    cfg.observed_fraction (с округлением).

    Returns:
        Таблицы в схеме загрузчика (ip: строки в записи с третями)
    """
    cfg = cfg or LeagueConfig()
    total_b = cfg.batters + cfg.fringe_batters
    total_p = cfg.pitchers + cfg.fringe_pitchers
    _, truth = generate(
        SimulationConfig(
            sigma=cfg.sigma,
            nmax=cfg.max_at_bats,
            rank=cfg.rank,
            dims=(total_b, total_p, len(PITCHING_RATES), len(BATTING_RATES)),
            missing_fraction=0.0,
            seed=cfg.seed,
        )
    )
    rng = np.random.default_rng([cfg.seed, 1])
    p = expit(logit(LEAGUE_AVERAGE) + truth.theta_X)

    batter_ids = [f"b{i + 1:04d}" for i in range(total_b)]
    pitcher_ids = [f"p{j + 1:04d}" for j in range(total_p)]

    core_cells = cfg.batters * cfg.pitchers
    observed = int(np.floor(cfg.observed_fraction * core_cells + 0.5))
    chosen = np.sort(rng.choice(core_cells, size=observed, replace=False))
    rows, cols = np.unravel_index(chosen, (cfg.batters, cfg.pitchers))

    if cfg.fringe_batters:
        fringe_rows = rng.integers(cfg.batters, total_b, size=cfg.fringe_batters * 5)
    else:
        fringe_rows = np.empty(0, dtype=int)
    fringe_cols = rng.integers(0, total_p, size=fringe_rows.size)
    rows = np.concatenate([rows, fringe_rows])
    cols = np.concatenate([cols, fringe_cols])

    at_bats = truth.N[rows, cols].astype(int)
    hits = rng.binomial(at_bats, p[rows, cols])
    matchups = pd.DataFrame(
        {
            "batter_id": [batter_ids[i] for i in rows],
            "pitcher_id": [pitcher_ids[j] for j in cols],
            "ab": at_bats,
            "h": hits,
        }
    )

    batters = _batting_table(rng, batter_ids, p.mean(axis=1), truth.theta_Z, cfg.batters)
    pitchers = _pitching_table(rng, pitcher_ids, truth.theta_Y, cfg.pitchers)
    logger.info(
        f"synthetic league batters={total_b} pitchers={total_p} "
        f"matchup_records={len(matchups)}"
    )
    return RawTables(batters=batters, pitchers=pitchers, matchups=matchups)


def write_league(
    tables: RawTables, data_dir: str | Path, cfg: IngestConfig = config
) -> dict[str, Path]:
    """
    Записать таблицы лиги в каталог данных.

    Returns:
        Пути к записанным файлам по именам таблиц
    """
    store = ArtifactStore(data_dir)
    return {
        "batting": store.write_frame(cfg.FILES["batting"], tables.batters),
        "pitching": store.write_frame(cfg.FILES["pitching"], tables.pitchers),
        "matchups": store.write_frame(cfg.FILES["matchups"], tables.matchups),
    }
