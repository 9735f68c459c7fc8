import csv
import io
import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from hjmyield import MaturityGrid, parse_yield_csv
from hjmyield.cli import main, parse_config_text

from cli_cases import CASES, DATA, HJM_GRID, snapshot, write_config

SCHEMAS = Path(__file__).resolve().parents[1] / "docs" / "schemas"
JSON_OUTPUT = {
    "simulate": "simulate.json",
    "calibrate": "covariance.json",
    "predict": "forecast.json",
    "backtest": "backtest.json",
    "vasicek": "vasicek.json",
    "arbitrage": "arbitrage.json",
    "grid-compare": "grid_compare.json",
}
SCHEMA_FILE = {"calibrate": "calibrate.json", "predict": "predict.json"}


def run(tmp_path, command, values, seed=0, name="cfg.txt"):
    cfg = write_config(tmp_path / name, values)
    out = tmp_path / f"out-{name}"
    code = main([command, "--config", str(cfg), "--out", str(out), "--seed", str(seed)])
    return code, out


def _schema(command):
    return json.loads((SCHEMAS / SCHEMA_FILE.get(command, JSON_OUTPUT[command])).read_text())


@pytest.mark.parametrize("case", sorted(CASES))
def test_command_output_validates(tmp_path, case):
    command, values = CASES[case]
    code, out = run(tmp_path, command, values)
    assert code == 0
    doc = json.loads((out / JSON_OUTPUT[command]).read_text())
    jsonschema.validate(doc, _schema(command))
    assert doc["command"] == command


def _csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_table1_pca(tmp_path):
    code, out = run(tmp_path, *CASES["calibrate-table1"])
    assert code == 0
    doc = json.loads((out / "covariance.json").read_text())
    assert doc["pca"]["cumulative"][4] >= 0.95
    assert doc["pca"]["excluded"] == ["1 week"]
    assert doc["pca_restricted"]["labels"][0] == "1Y"


def test_calibrate_beta_identity(tmp_path):
    code, out = run(tmp_path, *CASES["calibrate"])
    doc = json.loads((out / "covariance.json").read_text())
    assert doc["beta_identity_max_error"] == 0.0
    rows = _csv(out / "convergence.csv")
    assert len(rows) == doc["K"] * 14
    last = rows[-14:]
    assert float(last[5]["s_corrected"]) == pytest.approx(doc["s_corrected"][5][5], rel=1e-12)


def test_arbitrage_gain_series(tmp_path):
    code, out = run(tmp_path, *CASES["arbitrage"])
    rows = _csv(out / "arbitrage.csv")
    assert list(rows[0]) == ["time", "w", "gain_with_hjm", "gain_without_hjm"]
    doc = json.loads((out / "arbitrage.json").read_text())
    assert doc["n"] == len(rows) == 780 - 104 + 1
    assert float(rows[-1]["gain_with_hjm"]) == doc["terminal_gain_with_hjm"]


def test_backtest_per_maturity_files(tmp_path):
    code, out = run(tmp_path, *CASES["backtest"])
    names = {p.name for p in out.iterdir()}
    assert {"residuals.csv", "qq.csv", "backtest.json", "residuals_1Y.csv", "residuals_15Y.csv"} <= names
    assert len(_csv(out / "residuals.csv")) == 281


def test_vasicek_comparison(tmp_path):
    code, out = run(tmp_path, *CASES["vasicek"])
    doc = json.loads((out / "vasicek.json").read_text())
    assert doc["fixed_params"] is True
    assert "hjm_diagnostics" in doc
    assert list(_csv(out / "comparison.csv")[0]) == ["time", "z", "v"]


def test_simulate_round_trip(tmp_path):
    values = dict(CASES["simulate"][1])
    code, out = run(tmp_path, "simulate", values, seed=3)
    assert code == 0
    grid = MaturityGrid.from_labels(1 / 52, [s.strip() for s in HJM_GRID.split(",")], extrapolate_flat=True)
    panel = parse_yield_csv((out / "panel.csv").read_bytes(), grid)
    assert panel.yields.shape == (61, 14)
    values["input"] = str(out / "panel.csv")
    del values["steps"]
    code, out2 = run(tmp_path, "predict", values, name="predict.txt")
    assert code == 0


def test_bundled_fixture_regenerates(tmp_path):
    cfg = DATA / "synthetic.cfg"
    out = tmp_path / "regen"
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--seed", "7"]) == 0
    assert (out / "panel.csv").read_bytes() == (DATA / "synthetic_panel.csv").read_bytes()


@pytest.mark.parametrize("case", ["simulate", "backtest", "arbitrage"])
def test_rerun_identical(tmp_path, case):
    command, values = CASES[case]
    _, a = run(tmp_path, command, values, name="a.txt")
    _, b = run(tmp_path, command, values, name="b.txt")
    assert snapshot(a) == snapshot(b)
    _, c = run(tmp_path, command, values, name="a.txt")
    assert snapshot(c) == snapshot(a)


def _error(capsys):
    lines = capsys.readouterr().err.strip().splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


class TestErrors:
    def test_zero_steps(self, tmp_path, capsys):
        code, _ = run(tmp_path, "simulate", dict(CASES["simulate"][1], steps="0"))
        assert code == 2
        assert _error(capsys)["error"] == "UsageError"

    def test_unknown_key(self, tmp_path, capsys):
        code, _ = run(tmp_path, "predict", dict(CASES["predict"][1], window_start="3"))
        assert code == 2
        assert "window_start" in _error(capsys)["message"]

    def test_window_after_end(self, tmp_path, capsys):
        code, _ = run(tmp_path, "backtest", dict(CASES["backtest"][1], window_start="900"))
        assert code == 1
        err = _error(capsys)
        assert err["error"] == "BacktestError"
        assert "after data end" in err["message"]

    def test_empty_panel(self, tmp_path, capsys):
        empty = tmp_path / "empty.csv"
        empty.write_text("date,1W,1Y\n")
        code, _ = run(tmp_path, "calibrate", {"maturities": "1W, 1Y", "input": str(empty)})
        assert code == 1
        assert _error(capsys)["error"] == "GridError"

    def test_missing_input(self, tmp_path, capsys):
        code, _ = run(tmp_path, "predict", {"maturities": "1W, 1Y", "input": "nope.csv"})
        assert code == 2
        _error(capsys)

    def test_bad_seed_and_command(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.txt", CASES["simulate"][1])
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "-1"]) == 2
        _error(capsys)
        assert main(["explode"]) == 2
        _error(capsys)

    def test_threads_flag(self, tmp_path):
        cfg = write_config(tmp_path / "c.txt", CASES["simulate"][1])
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--threads", "1"]) == 0


class TestConfigParsing:
    def test_comments_and_blank_lines(self):
        got = parse_config_text("# header\n\nsteps = 5  # trailing\nmodel=hjm\n")
        assert got == {"steps": "5", "model": "hjm"}

    def test_duplicate_key(self):
        from hjmyield.cli import UsageError

        with pytest.raises(UsageError, match="duplicate"):
            parse_config_text("steps = 1\nsteps = 2\n")
