"""Annuity back-test residuals of the non-parametric model and the Vasicek baseline."""

from importlib import resources

import hjmyield as hy

labels = "1W 1Y 2Y 3Y 4Y 5Y 6Y 7Y 8Y 9Y 10Y 15Y".split()
grid = hy.MaturityGrid.from_labels(1 / 52, labels, extrapolate_flat=True)
spec = hy.ScalingSpec(floor=1e-4)
data = resources.files("hjmyield.data").joinpath("vasicek_panel.csv").read_bytes()
panel = hy.parse_yield_csv(data, grid)
annuity = hy.AnnuitySpec()

z = hy.residual_series(panel, annuity, spec, window_start=400)
v = hy.vasicek_residuals(panel, annuity, window_start=400)
for name, series in (("non-parametric z", z), ("Vasicek (MLE) v", v.series)):
    d = hy.residual_diagnostics(series)
    print(f"{name:>18}: n {d['n']}, mean {d['mean']:+.3f}, var {d['variance']:.3f}, lag-1 {d['lag1_autocorr']:+.3f}")
last = v.params[-1]
print(f"last Vasicek fit: kappa {last.kappa:.3f}, theta {last.theta:.4f}, g {last.g:.4f}")
