import json

import numpy as np
import pytest

from garchqr import cli
from garchqr.quantreg import SolverError
from garchqr.resultio import read_result, read_rows


@pytest.fixture(scope="module")
def series_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "x.csv"
    assert cli.main(["simulate", "--n", "600", "--seed", "3", "--output", str(path)]) == 0
    return path


def test_simulate_writes_returns_and_plot_data(tmp_path):
    out, plot = tmp_path / "s.csv", tmp_path / "s.tsv"
    code = cli.main(["simulate", "--n", "50", "--alpha0", "0.1", "--alpha", "0.15",
                     "--beta", "0.8", "--law", "student", "--nu", "6", "--seed", "1",
                     "--output", str(out), "--plot-data", str(plot)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "return" and len(lines) == 51
    header, rows = read_rows(plot)
    assert header == ["t", "return", "h"] and len(rows) == 50
    assert all(r[2] > 0 for r in rows)
    assert [float(v) for v in lines[1:]] == [r[1] for r in rows]


def test_simulate_is_seed_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cli.main(["simulate", "--n", "30", "--seed", "8", "-o", str(a)])
    cli.main(["simulate", "--n", "30", "--seed", "8", "-o", str(b)])
    assert a.read_text() == b.read_text()


def test_fit_result_file(series_csv, tmp_path):
    out = tmp_path / "fit.json"
    assert cli.main(["fit", "-i", str(series_csv), "--tau", "0.05,0.1", "-o", str(out)]) == 0
    kind, payload = read_result(out)
    assert kind == "fit" and payload["n"] == 600 and payload["orders"] == [1, 1]
    assert [lv["tau"] for lv in payload["levels"]] == [0.05, 0.1]
    for lv in payload["levels"]:
        assert len(lv["theta_tau"]) == 3 and lv["next_q"] < 0
        assert len(lv["qacf"]) == 6
    assert len(payload["qmle"]["theta"]) == 3


def test_fit_to_stdout_has_header(series_csv, capsys):
    assert cli.main(["fit", "-i", str(series_csv)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["format"] == "garchqr-result" and doc["kind"] == "fit"


def test_forecast_with_interval(series_csv, tmp_path):
    out = tmp_path / "f.json"
    assert cli.main(["forecast", "-i", str(series_csv), "--B", "40", "-o", str(out)]) == 0
    _, payload = read_result(out)
    row = payload["forecasts"][0]
    lo, hi = row["ci"]
    assert lo <= hi


def test_diagnose_and_plot_rows(series_csv, tmp_path):
    out, plot = tmp_path / "d.json", tmp_path / "d.tsv"
    code = cli.main(["diagnose", "-i", str(series_csv), "--tau", "0.1", "--B", "60", "-K", "4",
                     "-o", str(out), "--plot-data", str(plot)])
    assert code == 0
    kind, payload = read_result(out)
    assert kind == "diagnose" and payload["K"] == 4 and 0 <= payload["p_value"] <= 1
    header, rows = read_rows(plot)
    assert header == ["lag", "r", "lower", "upper"] and [r[0] for r in rows] == [1, 2, 3, 4]
    np.testing.assert_allclose([r[1] for r in rows], payload["r"])


def test_bootstrap_command(series_csv, tmp_path):
    out = tmp_path / "b.json"
    code = cli.main(["bootstrap", "-i", str(series_csv), "--tau", "0.25", "--B", "50",
                     "--weights", "W3", "-o", str(out)])
    assert code == 0
    _, payload = read_result(out)
    assert payload["B"] == 50 and payload["weights"] == "W3"
    assert len(payload["std_errors"]) == 3 and all(v > 0 for v in payload["std_errors"])


def test_backtest_command(series_csv, tmp_path):
    out, plot = tmp_path / "bt.json", tmp_path / "bt.tsv"
    code = cli.main(["backtest", "-i", str(series_csv), "--start", "560",
                     "--method", "hybrid,riskmetrics", "-o", str(out), "--plot-data", str(plot)])
    assert code == 0
    _, payload = read_result(out)
    assert [r["spec"]["method"] for r in payload["reports"]] == ["hybrid", "riskmetrics"]
    assert set(payload["best_ecr_tally"]) == {"hybrid", "riskmetrics"}
    header, rows = read_rows(plot)
    assert header[0] == "tau" and len(rows) == 40


def test_montecarlo_preset_table(tmp_path):
    out, table = tmp_path / "mc.json", tmp_path / "mc.tsv"
    code = cli.main(["montecarlo", "--preset", "coverage", "--scale", "0.01", "--B", "20",
                     "-o", str(out), "--table", str(table)])
    assert code == 0
    kind, payload = read_result(out)
    assert kind == "montecarlo" and len(payload["cells"]) == 1
    assert payload["cells"][0]["reps_used"] == 2
    assert 0.0 <= payload["cells"][0]["coverage"] <= 1.0


def test_config_file_and_flag_precedence(series_csv, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# settings\ntau = 0.1\nK = 3\n")
    out = tmp_path / "c.json"
    assert cli.main(["fit", "-i", str(series_csv), "--config", str(cfg), "-o", str(out)]) == 0
    _, payload = read_result(out)
    assert payload["levels"][0]["tau"] == 0.1 and len(payload["levels"][0]["qacf"]) == 3
    assert cli.main(["fit", "-i", str(series_csv), "--config", str(cfg), "--tau", "0.2",
                     "-o", str(out)]) == 0
    _, payload = read_result(out)
    assert payload["levels"][0]["tau"] == 0.2 and len(payload["levels"][0]["qacf"]) == 3


@pytest.mark.parametrize("argv", [
    ["fit"],
    ["fit", "-i", "/nonexistent/file.csv"],
    ["fit", "--tau", "1.5", "-i", "{csv}"],
    ["fit", "--orders", "1", "-i", "{csv}"],
    ["diagnose", "--tau", "0.1,0.2", "-i", "{csv}"],
    ["backtest", "-i", "{csv}"],
    ["backtest", "-i", "{csv}", "--start", "5"],
    ["montecarlo", "--preset", "coverage", "--config", "{bad_cfg}"],
])
def test_usage_errors_exit_1(argv, series_csv, tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    argv = [a.format(csv=series_csv, bad_cfg=bad) for a in argv]
    assert cli.main(argv) == 1
    assert capsys.readouterr().err.startswith("garchqr")


def test_argparse_errors_exit_1():
    with pytest.raises(SystemExit) as exc:
        cli.main(["fit", "--no-such-flag"])
    assert exc.value.code == 1


def test_short_series_is_an_input_error(tmp_path):
    path = tmp_path / "short.csv"
    path.write_text("return\n0.01\n-0.02\n")
    assert cli.main(["fit", "-i", str(path)]) == 1


def test_numerical_failure_exit_2(series_csv, monkeypatch, capsys):
    def broken(*args, **kwargs):
        raise SolverError("degenerate design")

    monkeypatch.setattr(cli, "fit_hybrid", broken)
    assert cli.main(["fit", "-i", str(series_csv)]) == 2
    assert "numerical failure" in capsys.readouterr().err
