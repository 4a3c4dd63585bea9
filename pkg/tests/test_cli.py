"""Тесты командной строки."""

import json

import pandas as pd
import pytest

from matchup_hub.cli.interface import COMMAND_HANDLERS, main_cli, parse_floats, parse_ints, run_command
from matchup_hub.core.exceptions import UsageError

TINY_SIMULATION = [
    "simulate", "--dims", "12,10,4,4", "--sigma", "0.3", "--nmax", "2",
    "--rank", "1", "--reps", "1", "--methods", "mean,log5,glmf",
]


class TestDispatch:
    def test_usage_without_command(self):
        outcome = run_command([])
        assert outcome.exit_code == 2
        assert "simulate" in outcome.text

    def test_help(self):
        assert run_command(["--help"]).exit_code == 0
        assert run_command(["fit", "--help"]).exit_code == 0

    def test_unknown_command(self):
        outcome = run_command(["train"])
        assert outcome.exit_code == 2
        assert "train" in outcome.text

    def test_all_commands_registered(self):
        assert set(COMMAND_HANDLERS) == {
            "simulate", "fit", "impute", "cv", "report", "synth-data", "illustrate"
        }

    def test_main_cli_prints_errors(self, capsys):
        assert main_cli(["train"]) == 2
        assert "train" in capsys.readouterr().err


class TestArgumentParsing:
    def test_lists(self):
        assert parse_floats("0.1, 0.7", "sigma") == (0.1, 0.7)
        assert parse_ints([1, 16], "nmax") == (1, 16)

    @pytest.mark.parametrize("value", ["abc", "0", "-0.5", ""])
    def test_invalid_floats(self, value):
        with pytest.raises(UsageError):
            parse_floats(value, "sigma")

    def test_invalid_ints(self):
        with pytest.raises(UsageError):
            parse_ints("1,x", "nmax")

    def test_standard_grid_in_message(self):
        with pytest.raises(UsageError, match="0.1, 0.3, 0.5, 0.7"):
            parse_floats("abc", "sigma", (0.1, 0.3, 0.5, 0.7))
        with pytest.raises(UsageError, match="1, 2, 8, 16"):
            parse_ints("0", "nmax", (1, 2, 8, 16))

    def test_simulate_lists_standard_grid(self, tmp_path):
        outcome = run_command([*TINY_SIMULATION[:4], "-1", "--output", str(tmp_path)])
        assert outcome.exit_code == 2
        assert "0.1, 0.3, 0.5, 0.7" in outcome.text
        outcome = run_command(
            ["simulate", "--nmax", "0", "--reps", "1", "--methods", "mean", "--output", str(tmp_path)]
        )
        assert outcome.exit_code == 2
        assert "1, 2, 8, 16" in outcome.text

    def test_missing_required_flag(self):
        assert run_command(["fit"]).exit_code == 2

    def test_rank_must_be_positive(self, tmp_path):
        outcome = run_command(["fit", "--rank", "0", "--data", str(tmp_path)])
        assert outcome.exit_code == 2

    def test_invalid_sigma(self, tmp_path):
        outcome = run_command([*TINY_SIMULATION[:4], "abc", "--output", str(tmp_path)])
        assert outcome.exit_code == 2

    def test_bad_dims(self, tmp_path):
        outcome = run_command(["simulate", "--dims", "12,10,4", "--output", str(tmp_path)])
        assert outcome.exit_code == 2

    def test_unknown_method(self, tmp_path):
        outcome = run_command([*TINY_SIMULATION[:-1], "knn", "--output", str(tmp_path)])
        assert outcome.exit_code == 2

    def test_unknown_config_key(self, tmp_path):
        config = tmp_path / "run.toml"
        config.write_text("alpha = 1\n", encoding="utf-8")
        outcome = run_command([*TINY_SIMULATION, "--config", str(config), "--output", str(tmp_path)])
        assert outcome.exit_code == 2
        assert "alpha" in outcome.text


class TestSimulate:
    def test_outputs_are_reproducible(self, tmp_path):
        first, second = tmp_path / "a", tmp_path / "b"
        assert run_command([*TINY_SIMULATION, "--output", str(first)]).exit_code == 0
        assert run_command([*TINY_SIMULATION, "--output", str(second)]).exit_code == 0

        for name in ("cells.csv", "aggregate.csv", "manifest.json"):
            assert (first / name).read_bytes() == (second / name).read_bytes()
        assert (first / "timings.json").exists()
        assert (first / "table_rmse_nmax2.csv").exists()

        manifest = json.loads((first / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["command"] == "simulate"
        assert manifest["master_seed"] == 2017
        assert manifest["config"]["grid"]["dims"] == [12, 10, 4, 4]

    def test_four_cell_sweep(self, tmp_path):
        outcome = run_command(
            [
                "simulate", "--dims", "12,10,4,4", "--sigma", "0.1,0.7", "--nmax", "8,16",
                "--rank", "2", "--reps", "1", "--methods", "mean", "--output", str(tmp_path),
            ]
        )
        assert outcome.exit_code == 0
        cells = pd.read_csv(tmp_path / "cells.csv")
        assert len(cells) == 4
        assert set(cells["sigma"]) == {0.1, 0.7}

    def test_seed_flag_changes_data(self, tmp_path):
        run_command([*TINY_SIMULATION, "--output", str(tmp_path / "a")])
        run_command([*TINY_SIMULATION, "--seed", "5", "--output", str(tmp_path / "b")])
        first = pd.read_csv(tmp_path / "a" / "cells.csv")
        second = pd.read_csv(tmp_path / "b" / "cells.csv")
        assert not first["seed"].equals(second["seed"])

    def test_dump_data(self, tmp_path):
        outcome = run_command([*TINY_SIMULATION, "--dump-data", "--output", str(tmp_path)])
        assert outcome.exit_code == 0
        dumped = list((tmp_path / "datasets").glob("*/dataset.json"))
        assert len(dumped) == 1


class TestPipeline:
    @pytest.fixture
    def league(self, tmp_path):
        data = tmp_path / "league"
        outcome = run_command(
            ["synth-data", "--batters", "30", "--pitchers", "25", "--seed", "5", "--output", str(data)]
        )
        assert outcome.exit_code == 0
        assert (data / "batting.csv").exists()
        return data

    def test_synth_cv_fit_impute_report(self, tmp_path, league):
        cv_dir, fit_dir = tmp_path / "cv", tmp_path / "fit"
        impute_dir, report_dir = tmp_path / "impute", tmp_path / "report"

        outcome = run_command(
            [
                "cv", "--data", str(league), "--folds", "2", "--ranks", "1",
                "--methods", "mean,glmf", "--output", str(cv_dir),
            ]
        )
        assert outcome.exit_code == 0, outcome.text
        table = pd.read_csv(cv_dir / "cv_table.csv")
        assert list(table["method"]) == ["Mean", "GLMF"]
        assert (cv_dir / "cv_pairs.csv").exists()

        outcome = run_command(["fit", "--data", str(league), "--rank", "2", "--output", str(fit_dir)])
        assert outcome.exit_code == 0, outcome.text
        assert (fit_dir / "factorization.json").exists()

        outcome = run_command(
            [
                "impute", "--data", str(league), "--method", "glmf", "--rank", "2",
                "--warm-start", str(fit_dir / "factorization.json"), "--output", str(impute_dir),
            ]
        )
        assert outcome.exit_code == 0, outcome.text
        p_hat = pd.read_csv(impute_dir / "p_hat.csv", index_col=0)
        assert p_hat.shape == (30, 25)
        assert p_hat.to_numpy().min() >= 0.001 and p_hat.to_numpy().max() <= 0.999

        outcome = run_command(
            [
                "report", "--input", str(impute_dir), "--data", str(league),
                "--top", "10", "--output", str(report_dir),
            ]
        )
        assert outcome.exit_code == 0, outcome.text
        matchups = pd.read_csv(report_dir / "favorable_matchups.csv")
        assert len(matchups) == 10
        assert matchups["p_hat"].is_monotonic_decreasing

    def test_saved_fit_as_warm_start_matches_one_shot(self, tmp_path):
        outcome = run_command(
            [
                "simulate", "--dims", "30,24,10,10", "--sigma", "1.0", "--nmax", "16",
                "--rank", "1", "--reps", "1", "--methods", "mean", "--dump-data",
                "--output", str(tmp_path / "sim"),
            ]
        )
        assert outcome.exit_code == 0, outcome.text
        (data,) = [path.parent for path in (tmp_path / "sim" / "datasets").glob("*/dataset.json")]

        config = tmp_path / "tight.toml"
        config.write_text(
            "impute_tolerance = 1e-8\nimpute_max_iter = 500\n"
            "outer_tolerance = 1e-11\nmax_outer_iter = 5000\n"
            "irls_tolerance = 1e-11\nirls_max_iter = 200\n",
            encoding="utf-8",
        )
        common = ["--data", str(data), "--config", str(config)]

        outcome = run_command(["fit", *common, "--rank", "1", "--output", str(tmp_path / "fit")])
        assert outcome.exit_code == 0, outcome.text
        impute = ["impute", *common, "--method", "glmf", "--rank", "1"]
        outcome = run_command(
            [
                *impute, "--warm-start", str(tmp_path / "fit" / "factorization.json"),
                "--output", str(tmp_path / "resumed"),
            ]
        )
        assert outcome.exit_code == 0, outcome.text
        assert run_command([*impute, "--output", str(tmp_path / "one_shot")]).exit_code == 0

        for name in ("resumed", "one_shot"):
            diagnostics = json.loads((tmp_path / name / "imputation.json").read_text(encoding="utf-8"))
            assert diagnostics["converged"], name
        resumed = pd.read_csv(tmp_path / "resumed" / "p_hat.csv", index_col=0)
        one_shot = pd.read_csv(tmp_path / "one_shot" / "p_hat.csv", index_col=0)
        assert resumed.shape == (30, 24)
        pd.testing.assert_frame_equal(resumed, one_shot, check_exact=False, rtol=0, atol=1e-6)

    def test_mean_imputation_without_rank(self, tmp_path, league):
        outcome = run_command(
            ["impute", "--data", str(league), "--method", "mean", "--output", str(tmp_path / "out")]
        )
        assert outcome.exit_code == 0
        assert (tmp_path / "out" / "imputation.json").exists()

    def test_rank_required_for_glmf(self, tmp_path, league):
        outcome = run_command(
            ["impute", "--data", str(league), "--method", "glmf", "--output", str(tmp_path / "out")]
        )
        assert outcome.exit_code == 2

    def test_missing_tables(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        outcome = run_command(["cv", "--data", str(empty), "--output", str(tmp_path / "out")])
        assert outcome.exit_code == 1
        assert "batting" in outcome.text

    def test_report_for_missing_input(self, tmp_path):
        outcome = run_command(["report", "--input", str(tmp_path / "nowhere")])
        assert outcome.exit_code == 1


def test_illustrate_small(tmp_path):
    outcome = run_command(["illustrate", "--dims", "30,30,10,10", "--output", str(tmp_path)])
    assert outcome.exit_code == 0
    correlations = json.loads((tmp_path / "correlations.json").read_text(encoding="utf-8"))
    assert set(correlations) >= {"p", "mu_Y", "mu_Z", "converged"}
