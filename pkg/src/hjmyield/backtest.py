"""Out-of-sample residuals and the short-long arbitrage check.

Forecasts at each evaluation time use an expanding window: the covariance
``S_K(y)`` for target row ``n`` is built from the increments among rows
``0 .. n-1`` only.  Running second moments are accumulated with a
sequential cumulative sum, so truncating the panel after row ``n`` leaves
every forecast up to ``n`` bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .calibration import raw_s, scaled_returns
from .dynamics import ScalingSpec, compute_upsilon, varsigma
from .errors import BacktestError
from .market_data import MaturityGrid, YieldPanel, shift_matrix

DEFAULT_ANNUITY = tuple(float(m) for m in range(1, 11)) + (15.0,)


@dataclass(frozen=True)
class AnnuitySpec:
    """Unit payments at the listed times to maturity."""

    maturities: tuple[float, ...] = DEFAULT_ANNUITY

    def __post_init__(self):
        if not self.maturities:
            raise ValueError("annuity needs at least one payment")
        object.__setattr__(self, "maturities", tuple(float(m) for m in self.maturities))

    @property
    def d3(self) -> int:
        return len(self.maturities)

    def indices(self, grid: MaturityGrid) -> np.ndarray:
        return np.array([grid.index_of(m) for m in self.maturities])


@dataclass(frozen=True)
class ResidualSeries:
    times: tuple[str, ...]
    residuals: np.ndarray
    taus: np.ndarray
    label: str
    forecasts: np.ndarray | None = None
    realized: np.ndarray | None = None

    def __post_init__(self):
        if not (len(self.times) == len(self.residuals) == len(self.taus)):
            raise ValueError("times, residuals and taus must have equal length")


def annuity_value(curve_row, annuity: AnnuitySpec, grid: MaturityGrid) -> float:
    """First-order value ``sum_m (1 - m Y(t, t+m))``."""
    idx = annuity.indices(grid)
    row = np.asarray(curve_row, dtype=float)
    m = np.asarray(annuity.maturities)
    return float(np.sum(1.0 - m * row[idx]))


def _moments(S, y, x, idx, m, delta):
    d3 = len(idx)
    mu = d3 - np.sum((m + delta) * y[idx]) + d3 * delta * x - 0.5 * np.sum(np.diag(S)[idx])
    tau2 = float(np.sum(S[np.ix_(idx, idx)]))
    return float(mu), tau2


def portfolio_forecast(panel: YieldPanel, annuity: AnnuitySpec, scaling: ScalingSpec, lambda_t=None) -> tuple[float, float]:
    """``(mu, tau^2)`` of the annuity value one step after the panel's last row.

    With ``lambda_t`` the mean is moved to the real-world measure by
    ``-sqrt(delta) 1' diag(h(y)) L_hat lambda``.

    Raises:
        BacktestError: if ``tau^2 <= 0``.
    """
    g = panel.grid
    g.require_short_end()
    scaled = scaled_returns(compute_upsilon(panel), scaling)
    y = shift_matrix(g) @ panel.yields[-1]
    x = float(panel.yields[-1, 0])
    S = raw_s(scaled, y, scaling)
    idx = annuity.indices(g)
    mu, tau2 = _moments(S, y, x, idx, np.asarray(annuity.maturities), g.delta)
    if lambda_t is not None:
        from .prediction import kappa_moments, mpr_adjusted_mean

        base = kappa_moments(x, y, scaled, scaling)
        shift = mpr_adjusted_mean(base, lambda_t, y, scaled, scaling).mean - base.mean
        mu -= float(np.sum(shift[idx]))
    if not tau2 > 0:
        raise BacktestError(f"degenerate forecast variance tau^2 = {tau2!r}")
    return mu, tau2


class _ExpandingWindow:
    """Conditioning data for one-step forecasts of every row of a panel."""

    def __init__(self, panel: YieldPanel, scaling: ScalingSpec):
        g = panel.grid
        g.require_short_end()
        self.panel = panel
        self.scaling = scaling
        ups = compute_upsilon(panel)
        c = scaled_returns(ups, scaling).values.T
        outer = c[:, :, None] * c[:, None, :]
        self.prefix = np.concatenate([np.zeros((1, g.d, g.d)), np.cumsum(outer, axis=0)])
        self.shifted = panel.yields @ shift_matrix(g).T

    def check_start(self, window_start: int, stride: int) -> None:
        if stride < 1:
            raise ValueError("stride must be >= 1")
        if window_start < 2:
            raise BacktestError("window_start must leave at least one increment of history")
        if window_start > self.panel.K:
            raise BacktestError(f"window start {window_start} after data end (last row {self.panel.K})")

    def conditioning(self, n: int, window_start: int, stride: int):
        """``(S_K(y), y, x)`` for target row ``n``; covariance refreshed every ``stride`` rows."""
        K = (n - 1) - ((n - window_start) % stride)
        y = self.shifted[n - 1]
        x = float(self.panel.yields[n - 1, 0])
        hy = varsigma(y, self.scaling)
        S = hy[:, None] * (self.prefix[K] / K) * hy[None, :]
        return S, y, x


def residual_series(
    panel: YieldPanel,
    annuity: AnnuitySpec,
    scaling: ScalingSpec,
    window_start: int,
    stride: int = 1,
    label: str | None = None,
) -> ResidualSeries:
    """Standardised errors ``z_t = (pi_t - mu_{t-delta}) / tau_{t-delta}``.

    Rows ``window_start .. K`` are forecast, each from the rows before it.
    """
    win = _ExpandingWindow(panel, scaling)
    win.check_start(window_start, stride)
    g = panel.grid
    idx = annuity.indices(g)
    m = np.asarray(annuity.maturities)
    rows = range(window_start, panel.K + 1)
    z, taus, mus, pis = [], [], [], []
    for n in rows:
        S, y, x = win.conditioning(n, window_start, stride)
        mu, tau2 = _moments(S, y, x, idx, m, g.delta)
        if not tau2 > 0:
            raise BacktestError(f"degenerate forecast variance at row {n}")
        tau = np.sqrt(tau2)
        pi = annuity_value(panel.yields[n], annuity, g)
        z.append((pi - mu) / tau)
        taus.append(tau)
        mus.append(mu)
        pis.append(pi)
    if label is None:
        label = "annuity" if annuity.d3 > 1 else g.labels[idx[0]]
    return ResidualSeries(
        tuple(panel.times[n] for n in rows), np.array(z), np.array(taus), label, np.array(mus), np.array(pis)
    )


def residual_diagnostics(series: ResidualSeries) -> dict:
    """Lag-one autocorrelation of ``z`` and ``|z|``, Q-Q pairs and moments."""
    z = np.asarray(series.residuals, dtype=float)
    if z.size < 3:
        raise BacktestError("need at least 3 residuals")
    var = float(np.var(z, ddof=1))
    if not var > 0:
        raise BacktestError("zero variance residual series")
    n = z.size
    theory = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    return {
        "n": int(n),
        "mean": float(z.mean()),
        "variance": var,
        "lag1_autocorr": lag1_autocorrelation(z),
        "abs_lag1_autocorr": lag1_autocorrelation(np.abs(z)),
        "qq_pairs": np.column_stack([theory, np.sort(z)]),
    }


def lag1_autocorrelation(x) -> float:
    x = np.asarray(x, dtype=float)
    dev = x - x.mean()
    den = float(dev @ dev)
    if den == 0:
        raise BacktestError("zero variance residual series")
    return float(dev[1:] @ dev[:-1] / den)


@dataclass(frozen=True)
class ArbitrageResult:
    """Per-step weights, realised values and prognoses of the short-long portfolio."""

    times: tuple[str, ...]
    weights: np.ndarray
    realized: np.ndarray
    prognosis_with_hjm: np.ndarray
    prognosis_without_hjm: np.ndarray

    @property
    def errors_with_hjm(self) -> np.ndarray:
        return self.realized - self.prognosis_with_hjm

    @property
    def errors_without_hjm(self) -> np.ndarray:
        return self.realized - self.prognosis_without_hjm

    @property
    def gain_with_hjm(self) -> np.ndarray:
        return np.cumsum(self.errors_with_hjm)

    @property
    def gain_without_hjm(self) -> np.ndarray:
        return np.cumsum(self.errors_without_hjm)

    @property
    def t_stat_with_hjm(self) -> float:
        return drift_t_statistic(self.errors_with_hjm)

    @property
    def t_stat_without_hjm(self) -> float:
        return drift_t_statistic(self.errors_without_hjm)


def drift_t_statistic(errors) -> float:
    """One-sample t statistic of the mean per-step error."""
    e = np.asarray(errors, dtype=float)
    sd = e.std(ddof=1)
    if not sd > 0:
        raise BacktestError("zero variance prognosis errors")
    return float(e.mean() / (sd / np.sqrt(e.size)))


def _second_order(u):
    return 1.0 - u + 0.5 * u * u


def _expected_second_order(mean_u, var_u):
    # E[1 - u + u^2/2] for Gaussian u
    return 1.0 - mean_u + 0.5 * (var_u + mean_u * mean_u)


def arbitrage_portfolio(
    panel: YieldPanel,
    m1: float | str,
    m2: float | str,
    scaling: ScalingSpec,
    window_start: int,
    stride: int = 1,
) -> ArbitrageResult:
    """Hold ``w_t`` bonds of maturity ``m1`` short one bond of maturity ``m2``.

    ``w_t = tau2 / tau1`` equalises the conditional standard deviations of
    ``m_i Y(t, t+m_i)``.  Values use the second-order expansion of
    ``exp(-u)``; the prognosis is its conditional expectation under the
    Gaussian forecast of ``u``, computed with and without the HJM term
    ``0.5 * S_ii`` in the mean.
    """
    g = panel.grid
    i1, i2 = g.index_of(m1), g.index_of(m2)
    if i1 == i2:
        raise ValueError("m1 and m2 must differ")
    win = _ExpandingWindow(panel, scaling)
    win.check_start(window_start, stride)
    mats = g.m
    rows = range(window_start, panel.K + 1)
    w_all, real, prog_w, prog_wo = [], [], [], []
    for n in rows:
        S, y, x = win.conditioning(n, window_start, stride)
        v1, v2 = S[i1, i1], S[i2, i2]
        if not v1 > 0:
            raise BacktestError(f"degenerate tau for maturity {g.labels[i1]} at row {n}")
        w = np.sqrt(v2 / v1)
        roll1 = (mats[i1] + g.delta) * y[i1] - g.delta * x
        roll2 = (mats[i2] + g.delta) * y[i2] - g.delta * x
        prog_w.append(w * _expected_second_order(roll1 + 0.5 * v1, v1) - _expected_second_order(roll2 + 0.5 * v2, v2))
        prog_wo.append(w * _expected_second_order(roll1, v1) - _expected_second_order(roll2, v2))
        u1 = mats[i1] * panel.yields[n, i1]
        u2 = mats[i2] * panel.yields[n, i2]
        real.append(w * _second_order(u1) - _second_order(u2))
        w_all.append(w)
    return ArbitrageResult(
        tuple(panel.times[n] for n in rows), np.array(w_all), np.array(real), np.array(prog_w), np.array(prog_wo)
    )


def density_process(lambdas, eps) -> np.ndarray:
    """``xi_t = prod_s exp(-|lambda_s|^2 / 2 + lambda_s . eps_s)`` along axis ``-2``.

    ``eps`` has shape ``(..., steps, d)``; ``lambdas`` broadcasts against it.
    """
    eps = np.asarray(eps, dtype=float)
    lam = np.broadcast_to(np.asarray(lambdas, dtype=float), eps.shape)
    log_inc = -0.5 * np.sum(lam * lam, axis=-1) + np.sum(lam * eps, axis=-1)
    return np.exp(np.cumsum(log_inc, axis=-1))
