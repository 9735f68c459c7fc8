"""Arbitrage-free non-parametric yield curve prediction on a discrete time grid."""

from .backtest import (
    AnnuitySpec,
    ArbitrageResult,
    ResidualSeries,
    annuity_value,
    arbitrage_portfolio,
    density_process,
    portfolio_forecast,
    residual_diagnostics,
    residual_series,
)
from .calibration import (
    CovarianceEstimate,
    ScaledReturnMatrix,
    calibrate,
    convergence_series,
    grid_compare,
    load_table1,
    pca_report,
    raw_s,
    scaled_returns,
)
from .dynamics import (
    FactorLoadings,
    ScalingSpec,
    UpsilonSeries,
    compute_upsilon,
    h_scale,
    hjm_drift,
    simulate_path,
    simulate_step,
    synthetic_sigma,
    varsigma,
)
from .errors import BacktestError, CalibrationError, CurveModelError, GridError, ScalingError
from .market_data import (
    MaturityGrid,
    YieldPanel,
    interpolate_shifted_yield,
    parse_yield_csv,
    shifted_curve,
    write_yield_csv,
)
from .prediction import ForecastDistribution, kappa_moments, kappa_sample, mpr_adjusted_mean, predict_next_curve
from .vasicek import (
    VasicekParams,
    affine_ab,
    fit_mle,
    ou_conditional_moments,
    simulate_panel,
    simulate_short_rate,
    vasicek_residuals,
    zcb_yields,
)

__version__ = "0.1.0"
