"""Batch front end: ``hjmyield <command> --config FILE --out DIR``.

Configs are ``key = value`` lines (``#`` starts a comment).  Every command
accepts the grid keys ``delta``, ``maturities``, ``theta``,
``extrapolate_flat`` and ``scaling_floor``; the remaining keys are listed in
``COMMAND_KEYS``.  Relative paths are resolved against the config file's
directory.  Outputs are written with sorted keys and ``repr`` floats so that
reruns are byte-identical.  Failures print one JSON line to stderr and exit
with status 2 (bad usage or config) or 1 (model or data error).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, rng
from .backtest import (
    AnnuitySpec,
    ResidualSeries,
    arbitrage_portfolio,
    residual_diagnostics,
    residual_series,
)
from .calibration import calibrate, convergence_series, grid_compare, load_table1, pca_report, read_matrix_csv
from .dynamics import DEFAULT_FLOOR, DEFAULT_THETA, FactorLoadings, ScalingSpec, simulate_path, synthetic_sigma
from .errors import CurveModelError
from .market_data import (
    MaturityGrid,
    YieldPanel,
    extrapolated_maturities,
    parse_maturity_label,
    parse_yield_csv,
    synthetic_dates,
    yield_csv_text,
)
from .prediction import predict_next_curve
from .vasicek import VasicekParams, simulate_panel, vasicek_residuals

GRID_KEYS = ("delta", "maturities", "theta", "extrapolate_flat", "scaling_floor")

COMMAND_KEYS = {
    "simulate": (
        "steps",
        "initial_curve",
        "sigma",
        "sigma_level",
        "sigma_yield_vol",
        "sigma_corr_length",
        "start_date",
        "model",
        "vasicek_kappa",
        "vasicek_theta",
        "vasicek_g",
    ),
    "calibrate": ("input", "source", "convergence", "pca_min_maturity"),
    "predict": ("input", "samples"),
    "backtest": ("input", "annuity", "window_start", "stride", "per_maturity"),
    "vasicek": ("input", "annuity", "window_start", "vasicek_kappa", "vasicek_theta", "vasicek_g", "compare"),
    "arbitrage": ("input", "m1", "m2", "window_start", "stride"),
    "grid-compare": ("input", "coarse_factor"),
}


class UsageError(Exception):
    """Bad command line or config; exit status 2."""


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class RunConfig:
    command: str
    values: dict[str, str]
    base_dir: Path
    grid: MaturityGrid
    scaling: ScalingSpec

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def path(self, key: str) -> Path:
        raw = self.values.get(key)
        if raw is None:
            raise UsageError(f"missing required key {key!r}")
        p = Path(raw)
        return p if p.is_absolute() else self.base_dir / p

    def integer(self, key: str, default: int | None = None) -> int:
        raw = self.values.get(key)
        if raw is None:
            if default is None:
                raise UsageError(f"missing required key {key!r}")
            return default
        try:
            return int(raw)
        except ValueError:
            raise UsageError(f"{key}: expected an integer, got {raw!r}") from None

    def number(self, key: str, default: float | None = None) -> float:
        raw = self.values.get(key)
        if raw is None:
            if default is None:
                raise UsageError(f"missing required key {key!r}")
            return default
        return _number(key, raw)

    def flag(self, key: str, default: bool = False) -> bool:
        raw = self.values.get(key)
        return default if raw is None else _bool(key, raw)


def _number(key: str, raw: str) -> float:
    try:
        v = float(Fraction(raw.strip())) if "/" in raw else float(raw)
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"{key}: expected a number, got {raw!r}") from None
    if not math.isfinite(v):
        raise UsageError(f"{key}: value must be finite")
    return v


def _bool(key: str, raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise UsageError(f"{key}: expected a boolean, got {raw!r}")


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise UsageError(f"config line {lineno}: empty key")
        if key in values:
            raise UsageError(f"config line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def build_config(command: str, values: dict[str, str], base_dir: Path) -> RunConfig:
    allowed = set(GRID_KEYS) | set(COMMAND_KEYS[command])
    unknown = sorted(set(values) - allowed)
    if unknown:
        raise UsageError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
    delta = _number("delta", values.get("delta", "1/52"))
    labels = [s.strip() for s in values.get("maturities", "").split(",") if s.strip()]
    floor_raw = values.get("scaling_floor", repr(DEFAULT_FLOOR)).strip().lower()
    floor = None if floor_raw == "off" else _number("scaling_floor", floor_raw)
    try:
        scaling = ScalingSpec(_number("theta", values.get("theta", repr(DEFAULT_THETA))), floor)
        grid = (
            MaturityGrid.from_labels(delta, labels, _bool("extrapolate_flat", values.get("extrapolate_flat", "false")))
            if labels
            else None
        )
    except CurveModelError as exc:
        raise UsageError(str(exc)) from None
    needs_grid = not (command == "calibrate" and values.get("source", "panel") == "table1")
    if grid is None and needs_grid:
        raise UsageError("missing required key 'maturities'")
    return RunConfig(command, values, base_dir, grid, scaling)


def load_config(command: str, path: str | None) -> RunConfig:
    if path is None:
        raise UsageError("--config is required")
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path!r}: {exc.strerror}") from None
    return build_config(command, parse_config_text(text), p.resolve().parent)


# ---------------------------------------------------------------- output


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def json_text(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else "nan"
    if isinstance(v, np.integer):
        return int(v)
    return v


class Outputs:
    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.written: list[str] = []

    def write(self, name: str, text: str) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        (self.dir / name).write_text(text, encoding="utf-8", newline="")
        self.written.append(name)


def _grid_meta(cfg: RunConfig) -> dict:
    g = cfg.grid
    return {
        "delta": g.delta,
        "maturities": list(g.labels),
        "theta": cfg.scaling.theta,
        "scaling_floor": cfg.scaling.floor,
        "extrapolate_flat": g.extrapolate_flat,
        "extrapolated_maturities": extrapolated_maturities(g),
    }


def _panel(cfg: RunConfig) -> YieldPanel:
    path = cfg.path("input")
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read input {str(path)!r}: {exc.strerror}") from None
    return parse_yield_csv(data, cfg.grid)


def _annuity(cfg: RunConfig) -> AnnuitySpec:
    raw = cfg.get("annuity")
    if raw is None:
        spec = AnnuitySpec()
    else:
        try:
            spec = AnnuitySpec(tuple(parse_maturity_label(s) for s in raw.split(",") if s.strip()))
        except (CurveModelError, ValueError) as exc:
            raise UsageError(f"annuity: {exc}") from None
    spec.indices(cfg.grid)  # every payment must be a grid maturity
    return spec


def _series_rows(series: ResidualSeries):
    return zip(series.times, series.residuals, series.taus)


def _diag_summary(series: ResidualSeries) -> dict:
    d = residual_diagnostics(series)
    d.pop("qq_pairs")
    return d


# ---------------------------------------------------------------- commands


def cmd_simulate(cfg: RunConfig, out: Outputs, seed: int) -> None:
    steps = cfg.integer("steps")
    if steps < 1:
        raise UsageError("steps must be at least 1")
    g = cfg.grid
    init_raw = [s for s in cfg.get("initial_curve", "0.03").split(",") if s.strip()]
    init = np.array([_number("initial_curve", s) for s in init_raw])
    if init.size == 1:
        init = np.full(g.d, init[0])
    if init.size != g.d:
        raise UsageError(f"initial_curve needs 1 or {g.d} values, got {init.size}")
    model = cfg.get("model", "hjm")
    if model == "vasicek":
        params = _vasicek_params(cfg)
        if params is None:
            raise UsageError("model = vasicek needs vasicek_kappa, vasicek_theta, vasicek_g")
        panel = simulate_panel(float(init[0]), steps, params, g, seed)
        meta = {"model": "vasicek", "vasicek": params.to_dict(), "r0": float(init[0])}
        _write_simulation(cfg, out, panel, seed, steps, meta)
        return
    if model != "hjm":
        raise UsageError(f"model must be 'hjm' or 'vasicek', got {model!r}")
    source = cfg.get("sigma", "synthetic")
    if source == "synthetic":
        level = cfg.number("sigma_level", float(np.mean(init)))
        vol = cfg.number("sigma_yield_vol", 0.006)
        length = cfg.number("sigma_corr_length", 30.0)
        sigma = synthetic_sigma(g.m, level, vol, length, cfg.scaling)
        sigma_meta = {"kind": "synthetic", "level": level, "yield_vol": vol, "corr_length": length}
    else:
        if source == "table1":
            labels, mat = load_table1()
        else:
            p = cfg.path("sigma")
            try:
                labels, mat = read_matrix_csv(p.read_text(encoding="utf-8"))
            except OSError as exc:
                raise UsageError(f"cannot read sigma {str(p)!r}: {exc.strerror}") from None
        try:
            idx = [[parse_maturity_label(l) for l in labels].index(m) for m in g.maturities]
        except ValueError:
            raise UsageError("sigma matrix does not cover every grid maturity") from None
        sigma = mat[np.ix_(idx, idx)]
        sigma_meta = {"kind": "file" if source != "table1" else "table1", "source": source}
    loadings = FactorLoadings.from_sigma(sigma)
    panel = simulate_path(init, steps, loadings, cfg.scaling, seed, g)
    meta = {"model": "hjm", "initial_curve": init, "sigma": sigma_meta, "sigma_matrix": sigma}
    _write_simulation(cfg, out, panel, seed, steps, meta)


def _write_simulation(cfg: RunConfig, out: Outputs, panel: YieldPanel, seed: int, steps: int, meta: dict) -> None:
    dates = synthetic_dates(panel.yields.shape[0], cfg.grid.delta, cfg.get("start_date", "2000-01-03"))
    out.write("panel.csv", yield_csv_text(YieldPanel(cfg.grid, panel.yields, dates)))
    report = {"command": "simulate", "seed": seed, "steps": steps, "grid": _grid_meta(cfg)}
    out.write("simulate.json", json_text(dict(report, **meta)))


def _vasicek_params(cfg: RunConfig) -> VasicekParams | None:
    keys = ("vasicek_kappa", "vasicek_theta", "vasicek_g")
    given = [k for k in keys if cfg.get(k) is not None]
    if not given:
        return None
    if len(given) != 3:
        raise UsageError("Vasicek parameters need all of vasicek_kappa, vasicek_theta, vasicek_g")
    try:
        return VasicekParams(*(cfg.number(k) for k in keys))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_calibrate(cfg: RunConfig, out: Outputs, seed: int) -> None:
    source = cfg.get("source", "panel")
    min_raw = cfg.get("pca_min_maturity")
    if source == "table1":
        labels, mat = load_table1()
        full = pca_report(mat, labels=labels)
        report = {
            "command": "calibrate",
            "mode": "table1",
            "labels": list(labels),
            "s_corrected": mat,
            "pca": _pca_json(full),
        }
        if min_raw is not None:
            m0 = parse_maturity_label(min_raw)
            sub = [l for l in labels if parse_maturity_label(l) >= m0 - 1e-12]
            report["pca_restricted"] = dict(_pca_json(pca_report(mat, subset=sub, labels=labels)), min_maturity=min_raw)
        out.write("covariance.json", json_text(report))
        return
    if source != "panel":
        raise UsageError(f"source must be 'panel' or 'table1', got {source!r}")
    panel = _panel(cfg)
    est = calibrate(panel, cfg.scaling)
    beta_check = float(np.max(np.abs(est.beta - (est.s_bias - est.s_corrected))))
    report = dict(est.to_dict(), command="calibrate", mode="panel", grid=_grid_meta(cfg))
    report["beta_identity_max_error"] = beta_check
    report["pca"] = _pca_json(pca_report(est))
    if min_raw is not None:
        m0 = parse_maturity_label(min_raw)
        sub = [l for l, m in zip(est.labels, panel.grid.maturities) if m >= m0 - 1e-12]
        report["pca_restricted"] = dict(_pca_json(pca_report(est, subset=sub)), min_maturity=min_raw)
    out.write("covariance.json", json_text(report))
    if cfg.flag("convergence"):
        conv = convergence_series(panel, cfg.scaling)
        rows = (
            (int(k), lab, conv["s_bias"][n, i], conv["s_corrected"][n, i])
            for n, k in enumerate(conv["K"])
            for i, lab in enumerate(panel.grid.labels)
        )
        out.write("convergence.csv", csv_text(["K", "maturity", "s_bias", "s_corrected"], rows))


def _pca_json(rep) -> dict:
    return {
        "labels": list(rep.labels),
        "eigen_shares": rep.shares,
        "cumulative": rep.cumulative,
        "excluded": list(rep.excluded),
    }


def cmd_predict(cfg: RunConfig, out: Outputs, seed: int) -> None:
    panel = _panel(cfg)
    fc = predict_next_curve(panel, cfg.scaling)
    n = cfg.integer("samples", 0)
    if n < 0:
        raise UsageError("samples must be non-negative")
    out.write(
        "forecast.json",
        json_text(
            {
                "command": "predict",
                "conditioning_time": fc.yields.conditioning_time,
                "horizon": fc.yields.horizon,
                "K": fc.scaled.K,
                "grid": _grid_meta(cfg),
                "forecast": fc.report(),
            }
        ),
    )
    if n:
        noise = rng.gaussian_block(seed, n, fc.scaled.K, rng.RESAMPLING)
        curves = fc.sample(noise)
        out.write(
            "samples.csv", csv_text(["sample", *panel.grid.labels], ([k, *row] for k, row in enumerate(curves)))
        )


def cmd_backtest(cfg: RunConfig, out: Outputs, seed: int) -> None:
    panel = _panel(cfg)
    annuity = _annuity(cfg)
    ws = cfg.integer("window_start")
    stride = cfg.integer("stride", 1)
    series = residual_series(panel, annuity, cfg.scaling, ws, stride)
    out.write("residuals.csv", csv_text(["time", "z", "tau"], _series_rows(series)))
    diag = residual_diagnostics(series)
    out.write("qq.csv", csv_text(["theoretical", "sample"], diag["qq_pairs"]))
    summary = {
        "command": "backtest",
        "annuity": list(annuity.maturities),
        "window_start": ws,
        "stride": stride,
        "grid": _grid_meta(cfg),
        "diagnostics": _diag_summary(series),
    }
    if cfg.flag("per_maturity"):
        per = {}
        for m in annuity.maturities:
            s = residual_series(panel, AnnuitySpec((m,)), cfg.scaling, ws, stride)
            lab = s.label
            out.write(f"residuals_{lab}.csv", csv_text(["time", "z", "tau"], _series_rows(s)))
            per[lab] = _diag_summary(s)
        summary["per_maturity"] = per
    out.write("backtest.json", json_text(summary))


def cmd_vasicek(cfg: RunConfig, out: Outputs, seed: int) -> None:
    panel = _panel(cfg)
    annuity = _annuity(cfg)
    ws = cfg.integer("window_start")
    params = _vasicek_params(cfg)
    bt = vasicek_residuals(panel, annuity, ws, params)
    out.write("vasicek_residuals.csv", csv_text(["time", "v", "tau"], _series_rows(bt.series)))
    report = {
        "command": "vasicek",
        "annuity": list(annuity.maturities),
        "window_start": ws,
        "fixed_params": params is not None,
        "grid": _grid_meta(cfg),
        "diagnostics": _diag_summary(bt.series),
        "params": [dict(p.to_dict(), time=t) for p, t in zip(bt.params, bt.series.times)],
    }
    if cfg.flag("compare", True):
        z = residual_series(panel, annuity, cfg.scaling, ws)
        zmap = dict(zip(z.times, z.residuals))
        rows = [(t, zmap[t], v) for t, v in zip(bt.series.times, bt.series.residuals) if t in zmap]
        out.write("comparison.csv", csv_text(["time", "z", "v"], rows))
        report["hjm_diagnostics"] = _diag_summary(z)
    out.write("vasicek.json", json_text(report))


def cmd_arbitrage(cfg: RunConfig, out: Outputs, seed: int) -> None:
    panel = _panel(cfg)
    m1 = parse_maturity_label(cfg.get("m1", "10Y"))
    m2 = parse_maturity_label(cfg.get("m2", "20Y"))
    ws = cfg.integer("window_start")
    stride = cfg.integer("stride", 1)
    res = arbitrage_portfolio(panel, m1, m2, cfg.scaling, ws, stride)
    rows = zip(res.times, res.weights, res.gain_with_hjm, res.gain_without_hjm)
    out.write("arbitrage.csv", csv_text(["time", "w", "gain_with_hjm", "gain_without_hjm"], rows))
    out.write(
        "arbitrage.json",
        json_text(
            {
                "command": "arbitrage",
                "m1": m1,
                "m2": m2,
                "window_start": ws,
                "stride": stride,
                "n": len(res.times),
                "grid": _grid_meta(cfg),
                "weight_min": float(res.weights.min()),
                "weight_max": float(res.weights.max()),
                "t_stat_with_hjm": res.t_stat_with_hjm,
                "t_stat_without_hjm": res.t_stat_without_hjm,
                "terminal_gain_with_hjm": float(res.gain_with_hjm[-1]),
                "terminal_gain_without_hjm": float(res.gain_without_hjm[-1]),
            }
        ),
    )


def cmd_grid_compare(cfg: RunConfig, out: Outputs, seed: int) -> None:
    panel = _panel(cfg)
    factor = cfg.integer("coarse_factor")
    if factor < 1:
        raise UsageError("coarse_factor must be a positive integer")
    cmp = grid_compare(panel, factor, cfg.scaling)
    out.write(
        "grid_compare.json",
        json_text(
            {
                "command": "grid-compare",
                "coarse_factor": factor,
                "labels": list(cmp.labels),
                "grid": _grid_meta(cfg),
                "relative_difference": cmp.relative_difference,
                "fine_s_corrected": cmp.fine.s_corrected[
                    np.ix_(*(2 * [[panel.grid.labels.index(l) for l in cmp.labels]]))
                ],
                "coarse_s_corrected": cmp.coarse.s_corrected,
                "fine_K": cmp.fine.K,
                "coarse_K": cmp.coarse.K,
            }
        ),
    )


COMMANDS = {
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "predict": cmd_predict,
    "backtest": cmd_backtest,
    "vasicek": cmd_vasicek,
    "arbitrage": cmd_arbitrage,
    "grid-compare": cmd_grid_compare,
}


# ---------------------------------------------------------------- entry


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hjmyield", description="Yield curve calibration, prediction and back-testing.")
    p.add_argument("--version", action="version", version=f"hjmyield {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    for name in COMMANDS:
        c = sub.add_parser(name)
        c.add_argument("--config", required=True, help="key = value config file")
        c.add_argument("--out", required=True, help="output directory")
        c.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
        c.add_argument("--threads", type=int, default=None, help="cap on BLAS/OpenMP worker threads")
    return p


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    try:
        args = _parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: " + ", ".join(COMMANDS))
        if args.seed < 0 or args.seed >= 2**64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be at least 1")
        cfg = load_config(args.command, args.config)
        out = Outputs(Path(args.out))
        if args.threads is None:
            COMMANDS[args.command](cfg, out, args.seed)
        else:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                COMMANDS[args.command](cfg, out, args.seed)
    except UsageError as exc:
        return _fail("UsageError", str(exc), 2)
    except (CurveModelError, ValueError, IndexError) as exc:
        return _fail(type(exc).__name__, str(exc), 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
