"""Cumulative prognosis errors of the 10Y/20Y short-long portfolio, with and without the HJM term."""

from importlib import resources

import hjmyield as hy

labels = "1W 3M 1Y 2Y 3Y 4Y 5Y 6Y 7Y 8Y 9Y 10Y 15Y 20Y".split()
grid = hy.MaturityGrid.from_labels(1 / 52, labels, extrapolate_flat=True)
spec = hy.ScalingSpec(floor=1e-4)
data = resources.files("hjmyield.data").joinpath("synthetic_panel.csv").read_bytes()
panel = hy.parse_yield_csv(data, grid)

res = hy.arbitrage_portfolio(panel, "10Y", "20Y", spec, window_start=104)
print(f"weights w_t in [{res.weights.min():.3f}, {res.weights.max():.3f}]")
print(f"t statistic with HJM term    {res.t_stat_with_hjm:+.2f}")
print(f"t statistic without HJM term {res.t_stat_without_hjm:+.2f}")
step = max(1, len(res.times) // 8)
for t, a, b in list(zip(res.times, res.gain_with_hjm, res.gain_without_hjm))[::step]:
    print(f"  {t}  {a:+.5f}  {b:+.5f}")
