"""Config files exercising every CLI command on the bundled fixtures."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

DATA = Path(str(resources.files("hjmyield.data")))
HJM_GRID = "1W, 3M, 1Y, 2Y, 3Y, 4Y, 5Y, 6Y, 7Y, 8Y, 9Y, 10Y, 15Y, 20Y"
VASICEK_GRID = "1W, 1Y, 2Y, 3Y, 4Y, 5Y, 6Y, 7Y, 8Y, 9Y, 10Y, 15Y"


def _hjm(**extra) -> dict:
    base = {
        "maturities": HJM_GRID,
        "extrapolate_flat": "true",
        "input": str(DATA / "synthetic_panel.csv"),
    }
    return dict(base, **extra)


CASES = {
    "simulate": ("simulate", {"maturities": HJM_GRID, "extrapolate_flat": "true", "steps": "60"}),
    "simulate-vasicek": (
        "simulate",
        {
            "maturities": VASICEK_GRID,
            "model": "vasicek",
            "steps": "60",
            "initial_curve": "0.02",
            "vasicek_kappa": "1",
            "vasicek_theta": "0.02",
            "vasicek_g": "0.01",
        },
    ),
    "calibrate": ("calibrate", _hjm(convergence="true", pca_min_maturity="1Y")),
    "calibrate-table1": ("calibrate", {"source": "table1", "pca_min_maturity": "1Y"}),
    "predict": ("predict", _hjm(samples="25")),
    "backtest": ("backtest", _hjm(window_start="500", per_maturity="true")),
    "vasicek": (
        "vasicek",
        _hjm(window_start="500", vasicek_kappa="1", vasicek_theta="0.03", vasicek_g="0.01"),
    ),
    "vasicek-mle": (
        "vasicek",
        {
            "maturities": VASICEK_GRID,
            "extrapolate_flat": "true",
            "input": str(DATA / "vasicek_panel.csv"),
            "window_start": "700",
        },
    ),
    "arbitrage": ("arbitrage", _hjm(window_start="104")),
    "grid-compare": ("grid-compare", _hjm(coarse_factor="13")),
}


def write_config(path: Path, values: dict) -> Path:
    path.write_text("".join(f"{k} = {v}\n" for k, v in values.items()), encoding="utf-8")
    return path


def snapshot(out_dir: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(out_dir.iterdir())}
