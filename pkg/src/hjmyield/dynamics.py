"""One-step yield curve dynamics under the martingale measure.

With ``y`` the curve read at times to maturity ``m + delta`` from the
previous row and ``r`` the previous one-period yield, the scaled increment

    Upsilon_m = m Y(t, t+m) - (m + delta) Y(t-delta, t+m)

is Gaussian with mean ``delta * (-r + 0.5 * h(y_m)**2 * s_mm)`` and
covariance ``delta * diag(h(y)) Sigma diag(h(y))`` where ``Sigma = L L'``
is constant.  The ``0.5 * h**2 * s`` part is the HJM term that keeps
discounted bond prices martingales.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import GridError, ScalingError
from .market_data import MaturityGrid, YieldPanel, shift_matrix, shifted_curves

DEFAULT_THETA = 0.025
DEFAULT_FLOOR = 1e-4


@dataclass(frozen=True)
class ScalingSpec:
    """Volatility scaling ``h``: linear up to ``theta``, square root above.

    ``floor``, when set, is substituted for yields below it before ``h`` is
    evaluated; the yields themselves are never modified.
    """

    theta: float = DEFAULT_THETA
    floor: float | None = None

    def __post_init__(self):
        if not self.theta >= 0:
            raise ScalingError("theta must be non-negative")
        if self.floor is not None and not self.floor > 0:
            raise ScalingError("floor must be positive when set")


def h_scale(y, spec: ScalingSpec):
    """Evaluate ``h`` elementwise; scalars in, scalars out.

    Raises:
        ScalingError: if a yield is not positive and no floor is configured.
    """
    arr = np.asarray(y, dtype=float)
    if spec.floor is not None:
        arr = np.maximum(arr, spec.floor)
    if np.any(~(arr > 0)):
        raise ScalingError("h undefined for non-positive yield (enable a scaling floor)")
    if spec.theta > 0:
        out = np.where(arr <= spec.theta, arr / np.sqrt(spec.theta), np.sqrt(arr))
    else:
        out = np.sqrt(arr)
    return float(out) if out.ndim == 0 else out


def varsigma(curve, spec: ScalingSpec) -> np.ndarray:
    """Diagonal of the scaling matrix ``diag(h(y_1), ..., h(y_d))``.

    The map is kept as its diagonal; its inverse is ``1 / varsigma(...)``.
    """
    return np.atleast_1d(h_scale(curve, spec))


@dataclass(frozen=True)
class FactorLoadings:
    """``sigma_matrix = L L'`` with ``L`` a square root of it.

    Only the product is identified by data; ``L`` defaults to the lower
    Cholesky factor with an eigenvalue fallback for singular matrices.
    """

    sigma_matrix: np.ndarray
    factor: np.ndarray

    @classmethod
    def from_sigma(cls, sigma) -> "FactorLoadings":
        s = np.array(sigma, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ValueError("sigma must be a square matrix")
        if not np.allclose(s, s.T, rtol=0, atol=1e-14 * max(1.0, np.abs(s).max())):
            raise ValueError("sigma must be symmetric")
        s = 0.5 * (s + s.T)
        try:
            L = np.linalg.cholesky(s)
        except np.linalg.LinAlgError:
            w, V = np.linalg.eigh(s)
            tol = 1e-12 * max(np.trace(s), 0.0)
            if w.min() < -tol:
                raise ValueError(f"sigma is not positive semi-definite (eigenvalue {w.min():.3e})")
            L = V * np.sqrt(np.clip(w, 0.0, None))
        if not np.allclose(L @ L.T, s, rtol=0, atol=1e-10):
            raise ValueError("factor does not reproduce sigma")
        s.setflags(write=False)
        L.setflags(write=False)
        return cls(s, L)

    @property
    def d(self) -> int:
        return self.sigma_matrix.shape[0]


def synthetic_sigma(maturities, level: float, yield_vol, corr_length: float, spec: ScalingSpec) -> np.ndarray:
    """``Sigma`` giving absolute yield volatility ``yield_vol`` (per year) at a flat curve ``level``.

    Correlations decay as ``exp(-|m_i - m_j| / corr_length)``.  The
    standard deviation of ``m Y(t, t+m)`` per unit time is ``m * yield_vol``,
    so ``s_ii = (m_i * yield_vol_i / h(level))**2``.
    """
    m = np.asarray(maturities, dtype=float)
    if not corr_length > 0:
        raise ValueError("corr_length must be positive")
    vol = np.broadcast_to(np.asarray(yield_vol, dtype=float), m.shape)
    sd = m * vol / h_scale(level, spec)
    corr = np.exp(-np.abs(m[:, None] - m[None, :]) / corr_length)
    return corr * np.outer(sd, sd)


@dataclass(frozen=True)
class UpsilonSeries:
    """Scaled curve increments of a panel.

    ``values[j, k-1]`` is ``Upsilon`` at time ``k * delta`` for maturity
    ``j``; ``shifted[k-1]`` is the curve ``y`` it was conditioned on and
    ``short_yields[k-1]`` the one-period yield ``Y((k-1) delta, k delta)``.
    ``short_yields`` has one more entry than there are increments.
    """

    grid: MaturityGrid
    values: np.ndarray
    shifted: np.ndarray
    short_yields: np.ndarray

    @property
    def K(self) -> int:
        return self.values.shape[1]


def compute_upsilon(panel: YieldPanel) -> UpsilonSeries:
    g = panel.grid
    Y = panel.yields
    shifted_all = shifted_curves(panel)
    m = g.m
    values = (m * Y[1:] - (m + g.delta) * shifted_all[:-1]).T
    if not np.all(np.isfinite(values)):
        raise GridError("non-finite increments")
    if g.has_short_end:
        short = Y[:, 0].copy()
    else:
        short = np.full(Y.shape[0], np.nan)
    return UpsilonSeries(g, values, shifted_all[:-1], short)


def hjm_drift(shifted_curve, short_yield: float, sigma: FactorLoadings, spec: ScalingSpec, delta: float):
    """Conditional mean of ``Upsilon``: ``delta * (-r + 0.5 * diag(Sigma(y)))``."""
    hy = varsigma(shifted_curve, spec)
    return delta * (-short_yield + 0.5 * hy**2 * np.diag(sigma.sigma_matrix))


def simulate_step(prev_curve, sigma: FactorLoadings, spec: ScalingSpec, noise, grid: MaturityGrid) -> np.ndarray:
    """Next curve row given the row at ``t - delta`` and ``d`` standard normals."""
    grid.require_short_end()
    prev = np.asarray(prev_curve, dtype=float)
    y = shift_matrix(grid) @ prev
    return _step(prev, y, sigma, spec, np.asarray(noise, dtype=float), grid)


def _step(prev, y, sigma, spec, noise, grid):
    m = grid.m
    hy = varsigma(y, spec)
    ups = hjm_drift(y, prev[0], sigma, spec, grid.delta) + np.sqrt(grid.delta) * hy * (sigma.factor @ noise)
    nxt = ((m + grid.delta) * y + ups) / m
    if not np.all(np.isfinite(nxt)):
        raise ScalingError("simulation produced non-finite yields")
    return nxt


def simulate_path(
    initial_curve, steps: int, sigma: FactorLoadings, spec: ScalingSpec, seed: int, grid: MaturityGrid
) -> YieldPanel:
    """Iterate :func:`simulate_step` with noise ``rng.gaussian(seed, k, d)`` at step ``k``."""
    if steps < 1:
        raise ValueError("steps must be at least 1")
    grid.require_short_end()
    if sigma.d != grid.d:
        raise ValueError("sigma dimension does not match grid")
    W = shift_matrix(grid)
    out = np.empty((steps + 1, grid.d))
    out[0] = np.asarray(initial_curve, dtype=float)
    for k in range(1, steps + 1):
        eps = rng.gaussian(seed, k, grid.d, rng.SIMULATION)
        try:
            out[k] = _step(out[k - 1], W @ out[k - 1], sigma, spec, eps, grid)
        except (ScalingError, GridError) as exc:
            raise type(exc)(f"step {k}: {exc}") from exc
    return YieldPanel(grid, out)


def discounted_bond(panel: YieldPanel, time_index: int, ttm_index: int) -> float:
    """``B_t^{-1} P(t, t+m)`` with the bank account rolled on one-period yields."""
    g = panel.grid
    g.require_short_end()
    Y = panel.yields
    log_bank = g.delta * Y[:time_index, 0].sum()
    m = g.maturities[ttm_index]
    return float(np.exp(-log_bank - m * Y[time_index, ttm_index]))
