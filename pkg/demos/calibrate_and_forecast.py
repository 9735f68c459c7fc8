"""Calibrate on the bundled synthetic panel and forecast the next curve."""

from importlib import resources

import numpy as np

import hjmyield as hy

labels = "1W 3M 1Y 2Y 3Y 4Y 5Y 6Y 7Y 8Y 9Y 10Y 15Y 20Y".split()
grid = hy.MaturityGrid.from_labels(1 / 52, labels, extrapolate_flat=True)
spec = hy.ScalingSpec(floor=1e-4)
data = resources.files("hjmyield.data").joinpath("synthetic_panel.csv").read_bytes()
panel = hy.parse_yield_csv(data, grid)

est = hy.calibrate(panel, spec)
print(f"K = {est.K} weekly increments")
print("correction as a share of the raw diagonal:")
for lab, raw, beta in zip(labels, np.diag(est.s_bias), np.diag(est.beta)):
    print(f"  {lab:>4}  {beta / raw:7.4f}")
# the 1W and 3M rows are almost pure drift, so their corrected variances are
# noise and the full correlation matrix is indefinite; look at >= 1Y instead
print(f"smallest correlation eigenvalue (all maturities): {est.min_eigenvalue:.3f}")
long_end = hy.pca_report(est, subset=labels[2:])
print("first three eigen shares, maturities >= 1Y:", np.round(long_end.shares[:3], 4))

fc = hy.predict_next_curve(panel, spec)
print(f"\nforecast for the row after {fc.yields.conditioning_time}:")
for row in fc.report():
    print(f"  {row['maturity']:>4}  mean {row['mean_yield']:.5f}  sd {row['stdev_yield']:.5f}")

ref_labels, table = hy.load_table1()
rep = hy.pca_report(table, labels=ref_labels)
print(f"\nbundled 17 x 17 matrix: top-5 share {rep.top(5):.4f} (excluded: {', '.join(rep.excluded)})")
