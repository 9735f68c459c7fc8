"""One-step-ahead forecasts by filtered historical simulation.

Historical scaled increments ``C = scaled / sqrt(K)`` are re-weighted with
fresh standard normals ``W`` (one per observation) and rescaled to today's
curve:

    kappa = -delta * x + 0.5 * diag(S_K(y)) + diag(h(y)) C W

so ``kappa`` is Gaussian with mean ``-delta x + 0.5 diag(S_K(y))`` and
covariance ``S_K(y)``.  Mapping ``kappa`` to yields is affine, so the yield
forecast is Gaussian too.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .calibration import ScaledReturnMatrix, raw_s, scaled_returns
from .dynamics import ScalingSpec, compute_upsilon, varsigma
from .errors import CalibrationError
from .market_data import YieldPanel, shifted_curve


@dataclass(frozen=True)
class ForecastDistribution:
    """Gaussian conditional law; scalar forecasts use 0-d arrays."""

    mean: np.ndarray
    covariance: np.ndarray
    horizon: float
    conditioning_time: str = ""

    @property
    def stdev(self) -> np.ndarray:
        cov = np.asarray(self.covariance)
        return np.sqrt(np.diag(cov)) if cov.ndim == 2 else np.sqrt(cov)


def kappa_moments(x, y, scaled: ScaledReturnMatrix, spec: ScalingSpec, conditioning_time: str = "") -> ForecastDistribution:
    S = raw_s(scaled, y, spec)
    x = np.broadcast_to(np.asarray(x, dtype=float), (scaled.d,))
    mean = -scaled.delta * x + 0.5 * np.diag(S)
    return ForecastDistribution(mean, S, scaled.delta, conditioning_time)


def kappa_sample(x, y, scaled: ScaledReturnMatrix, spec: ScalingSpec, noise) -> np.ndarray:
    """One draw of ``kappa`` from ``K`` standard normals (or a ``(n, K)`` batch)."""
    noise = np.asarray(noise, dtype=float)
    if noise.shape[-1] != scaled.K:
        raise ValueError(f"noise needs {scaled.K} components, got {noise.shape[-1]}")
    base = kappa_moments(x, y, scaled, spec).mean
    hy = varsigma(y, spec)
    C = scaled.values / np.sqrt(scaled.K)
    return base + (noise @ C.T) * hy


@dataclass(frozen=True)
class CurveForecast:
    """Forecast of the next curve on the grid maturities.

    ``yields`` is the Gaussian law of ``Y(t, t+m)``; ``kappa`` the law of
    the increment it is mapped from; ``roll_down`` the curve implied with
    zero volatility.
    """

    labels: tuple[str, ...]
    maturities: np.ndarray
    yields: ForecastDistribution
    kappa: ForecastDistribution
    roll_down: np.ndarray
    shifted: np.ndarray
    short_yield: float
    scaled: ScaledReturnMatrix
    spec: ScalingSpec

    def to_yields(self, kappa) -> np.ndarray:
        m = self.maturities
        return ((m + self.scaled.delta) * self.shifted + np.asarray(kappa)) / m

    def sample(self, noise) -> np.ndarray:
        """Curves from ``K`` (or ``(n, K)``) standard normals."""
        return self.to_yields(kappa_sample(self.short_yield, self.shifted, self.scaled, self.spec, noise))

    def report(self) -> list[dict]:
        sd = self.yields.stdev
        return [
            {
                "maturity": lab,
                "mean_yield": float(mu),
                "stdev_yield": float(s),
                "roll_down_yield": float(rd),
            }
            for lab, mu, s, rd in zip(self.labels, self.yields.mean, sd, self.roll_down)
        ]


def predict_next_curve(panel: YieldPanel, spec: ScalingSpec) -> CurveForecast:
    """Forecast the row after the last one, using only rows of ``panel``."""
    g = panel.grid
    g.require_short_end()
    scaled = scaled_returns(compute_upsilon(panel), spec)
    view = shifted_curve(panel, panel.K)
    x = float(panel.yields[-1, 0])
    kap = kappa_moments(x, view.values, scaled, spec, view.base_time)
    m = g.m
    mean = ((m + g.delta) * view.values + kap.mean) / m
    cov = kap.covariance / np.outer(m, m)
    roll = ((m + g.delta) * view.values - g.delta * x) / m
    return CurveForecast(
        g.labels, m, ForecastDistribution(mean, cov, g.delta, view.base_time), kap, roll, view.values, x, scaled, spec
    )


def mpr_adjusted_mean(base: ForecastDistribution, lambda_t, y, scaled: ScaledReturnMatrix, spec: ScalingSpec) -> ForecastDistribution:
    """Shift a ``kappa`` forecast by ``sqrt(delta) * diag(h(y)) L_hat lambda``.

    ``L_hat`` is the lower Cholesky factor of ``C C' / delta`` so that
    ``diag(h(y)) L_hat`` is the Cholesky factor of ``S_K(y) / delta``.
    """
    lam = np.asarray(lambda_t, dtype=float)
    if not np.all(np.isfinite(lam)):
        raise ValueError("market price of risk must be finite")
    try:
        L = np.linalg.cholesky(scaled.second_moment() / scaled.delta)
    except np.linalg.LinAlgError:
        raise CalibrationError("S is not factorizable (not positive definite)") from None
    shift = np.sqrt(scaled.delta) * varsigma(y, spec) * (L @ lam)
    return replace(base, mean=np.asarray(base.mean) + shift)
