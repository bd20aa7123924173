"""
In-sample versus out-of-sample pricing errors
=============================================

States are estimated from the 13 nearest contracts only and then used to
price all 20.  The far contracts were never seen by the filter, so their
errors show how well the model extrapolates along the curve.
"""

import numpy as np

from oufutures import ModelParams
from oufutures.evaluation import cross_section, estimate_states, rmse_report
from oufutures.simulation import rolling_maturities, simulate

theta = ModelParams(
    kappa=1.5, gamma=0.1, mu_xi=0.05, sigma_chi=0.3, sigma_xi=0.2,
    rho=0.4, lambda_chi=0.02, lambda_xi=0.01, s1=0.02, s2=0.01,
)

# about four years of daily quotes on 20 rolling monthly contracts
n_dates = 1008
sim = simulate(theta, n_dates, maturities=rolling_maturities(n_dates, 20), seed=3)
panel = sim.panel

filt, smth = estimate_states(panel, theta)  # C1-C13 by default
report = rmse_report(panel, theta, filt, smth, period=f"{panel.dates[0]} to {panel.dates[-1]}")
print(report.to_table())

for est in ("filter", "smoother"):
    print(f"{est:>8}: mean in-sample {report.mean(est, 'in'):.5f}  out-of-sample {report.mean(est, 'out'):.5f}")

# the out-of-sample error grows with distance from the estimation window
out = report.filter_rmse[13:]
print("slope of out-of-sample RMSE per contract:", f"{np.polyfit(np.arange(out.size), out, 1)[0]:.2e}")

# a single date: observed curve against the two fitted curves
cs = cross_section(panel, theta, filt, smth, panel.dates[500])
print(cs.date, cs.shape, f"S_F={cs.S_F:.3e}", f"S_S={cs.S_S:.3e}")
for i in (0, 6, 12, 13, 19):
    print(f"  C{i + 1:<3} T={cs.maturities[i]:.3f}  observed {cs.observed[i]:.4f}"
          f"  filter {cs.filter_fit[i]:.4f}  smoother {cs.smoother_fit[i]:.4f}")
