import csv
import datetime as dt
import json

import numpy as np
import pytest

from chronocast.cli import SEED_ENV, main, resolve_seed


def tidy_csv(path, values, start=dt.date(2021, 1, 1), skip=()):
    lines = ["date,value"]
    for k, v in enumerate(values):
        if k not in skip:
            lines.append(f"{(start + dt.timedelta(days=k)).isoformat()},{v!r}")
    path.write_text("\n".join(lines) + "\n")
    return str(path)


@pytest.fixture
def smooth_csv(tmp_path):
    t = np.arange(240)
    return tidy_csv(tmp_path / "smooth.csv", [float(v) for v in 30 + 2 * np.sin(t / 8.0) + 0.01 * t])


def test_stats(synthetic_csv, tmp_path, capsys):
    assert main(["stats", "--input", str(synthetic_csv), "--output-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("count,1004\n")
    rows = list(csv.reader((tmp_path / "stats.csv").open()))
    assert rows[0] == ["statistic", "value"] and len(rows) == 12


def test_prepare(synthetic_csv, tmp_path, capsys):
    assert main(["prepare", "--input", str(synthetic_csv), "--output-dir", str(tmp_path), "--no-plots"]) == 0
    assert "train/validation/test 800/100/101" in capsys.readouterr().out
    rows = list(csv.DictReader((tmp_path / "prepared.csv").open()))
    assert len(rows) == 1004
    assert [r["target_split"] for r in rows[:4]] == ["", "", "", "train"]
    assert rows[-1]["target_split"] == "test"


def test_train_evaluate_forecast_round_trip(smooth_csv, tmp_path, capsys):
    out = str(tmp_path)
    assert main(["train", "--input", smooth_csv, "--format", "tidy", "--model", "gm11", "--output-dir", out]) == 0
    capsys.readouterr()
    assert main(["evaluate", "--checkpoint", str(tmp_path / "gm11.ckpt"), "--scale", "normalized"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2 and lines[1].startswith("gm11,")
    trace = list(csv.DictReader((tmp_path / "trace_gm11.csv").open()))
    assert len(trace) == 240 - 3 - 189 - 23

    assert main(["forecast", "--checkpoint", str(tmp_path / "gm11.ckpt"), "--horizon", "10", "--output-dir", out]) == 0
    rows = list(csv.DictReader((tmp_path / "forecast.csv").open()))
    assert rows[0]["date"] == "2021-08-29" and len(rows) == 10
    assert (tmp_path / "forecast.png").exists()


def test_forecast_to_end_of_2022(synthetic_csv, tmp_path):
    args = ["forecast", "--input", str(synthetic_csv), "--model", "gm11", "--horizon", "92",
            "--output-dir", str(tmp_path), "--no-plots"]
    assert main(args) == 0
    rows = list(csv.DictReader((tmp_path / "forecast.csv").open()))
    assert len(rows) == 92
    assert rows[0]["date"] == "2022-10-01" and rows[-1]["date"] == "2022-12-31"
    assert (tmp_path / "gm11.ckpt").exists() and not (tmp_path / "forecast.png").exists()


def test_compare_subset_writes_outputs(smooth_csv, tmp_path, capsys):
    args = ["compare", "--input", smooth_csv, "--format", "tidy", "--model", "gm11", "--model", "arima",
            "--paper-config", "--output-dir", str(tmp_path), "--no-plots", "--seed", "4"]
    assert main(args) == 0
    doc = json.loads((tmp_path / "comparison.json").read_text())
    assert [r["model_name"] for r in doc["comparison"]["rows"]["normalized"]] == ["gm11", "arima"]
    assert doc["config"]["seed"] == 4
    assert "[normalized]" in capsys.readouterr().out


class TestSeed:
    def test_flag_beats_env_beats_config(self, monkeypatch):
        monkeypatch.delenv(SEED_ENV, raising=False)
        assert resolve_seed(None, 3) == 3
        monkeypatch.setenv(SEED_ENV, "17")
        assert resolve_seed(None, 3) == 17
        assert resolve_seed(5, 3) == 5

    def test_env_reaches_the_run(self, smooth_csv, tmp_path, monkeypatch):
        monkeypatch.setenv(SEED_ENV, "23")
        args = ["compare", "--input", smooth_csv, "--format", "tidy", "--model", "gm11",
                "--output-dir", str(tmp_path), "--no-plots"]
        assert main(args) == 0
        assert json.loads((tmp_path / "comparison.json").read_text())["config"]["seed"] == 23

    def test_bad_env_is_usage_error(self, smooth_csv, tmp_path, monkeypatch):
        monkeypatch.setenv(SEED_ENV, "abc")
        assert main(["train", "--input", smooth_csv, "--format", "tidy", "--model", "gm11",
                     "--output-dir", str(tmp_path)]) == 1


class TestExitCodes:
    def test_help(self, capsys):
        assert main(["--help"]) == 0

    @pytest.mark.parametrize("argv", [
        [],
        ["stats"],
        ["stats", "--input", "x.csv", "--frobnicate"],
        ["train", "--input", "x.csv", "--model", "prophet"],
        ["forecast", "--input", "x.csv", "--horizon", "0"],
        ["compare"],
    ])
    def test_usage(self, argv, capsys):
        assert main(argv) == 1
        assert capsys.readouterr().err

    def test_bad_config_file(self, smooth_csv, tmp_path, capsys):
        cfg = tmp_path / "bad.ini"
        cfg.write_text("[experiment]\nbogus = 1\n")
        assert main(["compare", "--input", smooth_csv, "--config", str(cfg), "--output-dir", str(tmp_path)]) == 1

    def test_missing_file(self, tmp_path, capsys):
        assert main(["stats", "--input", str(tmp_path / "nope.csv")]) == 2
        assert "cannot read" in capsys.readouterr().err

    def test_gap_in_data(self, tmp_path, capsys):
        path = tidy_csv(tmp_path / "gap.csv", [1.0] * 30, skip={12})
        assert main(["stats", "--input", path, "--format", "tidy"]) == 2
        assert "2021-01-13" in capsys.readouterr().err

    def test_schema(self, tmp_path, capsys):
        (tmp_path / "s.csv").write_text("when,value\n2021-01-01,1\n")
        assert main(["stats", "--input", str(tmp_path / "s.csv"), "--format", "tidy"]) == 2

    def test_model_failure(self, tmp_path, capsys):
        path = tidy_csv(tmp_path / "neg.csv", [float(v) for v in np.sin(np.arange(200) / 5.0)])
        argv = ["train", "--input", path, "--format", "tidy", "--model", "gm11", "--output-dir", str(tmp_path)]
        assert main(argv) == 3
        assert "gm11" in capsys.readouterr().err

    def test_compare_all_failed(self, tmp_path, capsys):
        path = tidy_csv(tmp_path / "neg.csv", [float(v) for v in np.sin(np.arange(200) / 5.0)])
        argv = ["compare", "--input", path, "--format", "tidy", "--model", "gm11", "--output-dir", str(tmp_path)]
        assert main(argv) == 3

    def test_corrupt_checkpoint(self, tmp_path, capsys):
        (tmp_path / "x.ckpt").write_text("not a checkpoint\n")
        assert main(["evaluate", "--checkpoint", str(tmp_path / "x.ckpt")]) == 3
