"""One-factor Vasicek short-rate baseline with zero market price of risk.

``dr = kappa (theta - r) dt + g dW``; zero-coupon prices are
``exp(A(m) - r B(m))``.  Parameters are fitted to the shortest observed
yield by exact-discretisation maximum likelihood and then used to forecast
the annuity value one step ahead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .backtest import AnnuitySpec, ResidualSeries, annuity_value
from .errors import CalibrationError
from .market_data import MaturityGrid, YieldPanel


@dataclass(frozen=True)
class VasicekParams:
    kappa: float
    theta: float
    g: float

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not self.g > 0:
            raise ValueError("g must be positive")

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "theta": self.theta, "g": self.g}


def _one_minus_exp_over(x: float) -> float:
    # (1 - exp(-x)) / x, stable near 0
    return float(-np.expm1(-x) / x) if x != 0 else 1.0


def ou_conditional_moments(r_prev, params: VasicekParams, delta: float) -> tuple[float, float]:
    """Mean and variance of ``r_t`` given ``r_{t-delta}``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    decay = np.exp(-params.kappa * delta)
    mean = r_prev * decay + params.theta * (1.0 - decay)
    var = params.g**2 * delta * _one_minus_exp_over(2.0 * params.kappa * delta)
    return mean, float(var)


def fit_mle(short_rates, delta: float) -> VasicekParams:
    """Gaussian AR(1) maximum likelihood on an equally spaced series.

    Raises:
        CalibrationError: fewer than 3 points, a constant series, or a
            fitted slope outside ``(0, 1)``.
    """
    r = np.asarray(short_rates, dtype=float)
    if r.size < 3:
        raise CalibrationError("need at least 3 observations")
    x, y = r[:-1], r[1:]
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0:
        raise CalibrationError("degenerate (constant) short-rate series")
    slope = float(xc @ (y - y.mean())) / sxx
    if slope >= 1:
        raise CalibrationError(f"no mean reversion (slope {slope:.6f} >= 1)")
    if slope <= 0:
        raise CalibrationError(f"slope {slope:.6f} <= 0")
    intercept = float(y.mean() - slope * x.mean())
    resid = y - intercept - slope * x
    s2 = float(resid @ resid) / resid.size
    if not s2 > 0:
        raise CalibrationError("degenerate residual variance")
    kappa = -np.log(slope) / delta
    theta = intercept / (1.0 - slope)
    g2 = s2 / (delta * _one_minus_exp_over(2.0 * kappa * delta))
    return VasicekParams(float(kappa), float(theta), float(np.sqrt(g2)))


def affine_ab(m: float, params: VasicekParams) -> tuple[float, float]:
    """``(A(m), B(m))`` with ``P(t, t+m) = exp(A(m) - r_t B(m))``."""
    if not m > 0:
        raise ValueError("time to maturity must be positive")
    k, th, g = params.kappa, params.theta, params.g
    B = m * _one_minus_exp_over(k * m)
    A = (th - g * g / (2 * k * k)) * (B - m) - g * g * B * B / (4 * k)
    return float(A), float(B)


def zcb_yields(r, maturities, params: VasicekParams) -> np.ndarray:
    """Model yields ``-(A(m) - r B(m)) / m``; ``r`` may be an array of states."""
    r = np.asarray(r, dtype=float)
    ab = np.array([affine_ab(m, params) for m in maturities])
    m = np.asarray(maturities, dtype=float)
    return (r[..., None] * ab[:, 1] - ab[:, 0]) / m


def simulate_short_rate(r0: float, steps: int, params: VasicekParams, delta: float, seed: int) -> np.ndarray:
    """Exact OU transitions driven by the package's Gaussian stream."""
    out = np.empty(steps + 1)
    out[0] = r0
    for k in range(1, steps + 1):
        mean, var = ou_conditional_moments(out[k - 1], params, delta)
        out[k] = mean + np.sqrt(var) * rng.gaussian(seed, k, 1, rng.VASICEK)[0]
    return out


def simulate_panel(r0: float, steps: int, params: VasicekParams, grid: MaturityGrid, seed: int) -> YieldPanel:
    """Yield panel generated by the Vasicek model itself."""
    r = simulate_short_rate(r0, steps, params, grid.delta, seed)
    return YieldPanel(grid, zcb_yields(r, grid.maturities, params))


def annuity_moments(r_prev: float, params: VasicekParams, annuity: AnnuitySpec, delta: float) -> tuple[float, float]:
    """Conditional mean and variance of the first-order annuity value."""
    mean_r, var_r = ou_conditional_moments(r_prev, params, delta)
    ab = np.array([affine_ab(m, params) for m in annuity.maturities])
    mean = float(np.sum(1.0 + ab[:, 0] - mean_r * ab[:, 1]))
    var = var_r * float(ab[:, 1].sum()) ** 2
    return mean, var


@dataclass(frozen=True)
class VasicekBacktest:
    series: ResidualSeries
    params: tuple[VasicekParams, ...]


def vasicek_residuals(
    panel: YieldPanel,
    annuity: AnnuitySpec,
    window_start: int,
    params: VasicekParams | None = None,
) -> VasicekBacktest:
    """Residuals ``v_t`` of the annuity value under the Vasicek forecast.

    The shortest-maturity yield is the short-rate proxy.  Without fixed
    ``params`` the model is refitted by MLE on rows ``0 .. t-1`` before
    forecasting row ``t``.
    """
    delta = panel.grid.delta
    if window_start < 3 and params is None:
        raise CalibrationError("expanding-window MLE needs window_start >= 3")
    if window_start > panel.K:
        raise CalibrationError(f"window start {window_start} after data end (last row {panel.K})")
    proxy = panel.yields[:, 0]
    vs, taus, mus, pis, fitted = [], [], [], [], []
    rows = range(window_start, panel.K + 1)
    for n in rows:
        try:
            p = params if params is not None else fit_mle(proxy[:n], delta)
        except CalibrationError as exc:
            raise CalibrationError(f"MLE failure for window ending at row {n - 1}: {exc}") from exc
        mean, var = annuity_moments(proxy[n - 1], p, annuity, delta)
        pi = annuity_value(panel.yields[n], annuity, panel.grid)
        tau = np.sqrt(var)
        vs.append((pi - mean) / tau)
        taus.append(tau)
        mus.append(mean)
        pis.append(pi)
        fitted.append(p)
    series = ResidualSeries(
        tuple(panel.times[n] for n in rows), np.array(vs), np.array(taus), "vasicek", np.array(mus), np.array(pis)
    )
    return VasicekBacktest(series, tuple(fitted))
