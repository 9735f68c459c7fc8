"""Exception types raised across the package."""


class CurveModelError(ValueError):
    """Base class for all model and data errors."""


class GridError(CurveModelError):
    """Invalid maturity grid, panel layout or interpolation request."""


class ScalingError(CurveModelError):
    """Volatility scaling is undefined for the given yields."""


class CalibrationError(CurveModelError):
    """Covariance calibration cannot be completed on the given data."""


class BacktestError(CurveModelError):
    """Degenerate forecast or residual computation."""
