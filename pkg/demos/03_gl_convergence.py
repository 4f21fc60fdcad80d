"""
Strong and weak errors on the Ginzburg-Landau equation
======================================================

A small coupled ensemble: every path gets one fine Brownian lattice, the
mte reference runs on it at 2^-11 and each scheme runs on exact pairwise
sums of the same increments. 2000 paths take a few seconds; the bundled
``gl_1d.cfg`` config does the full-size study through the CLI.
"""

import warnings

from tamed_sde import SeedSpec, TamingConfig, builtin_problem, fit_order, simulate_coupled
from tamed_sde.analysis import error_table

schemes = ["tamed_euler", "mte", "mte_rbm"]
res = simulate_coupled(builtin_problem("ginzburg_landau_1d"), schemes, TamingConfig(),
                       k_ref=11, levels=[5, 6, 7, 8], M=2000, seed=SeedSpec(1))
rows = error_table(res, ["cos_x"])

print("scheme          h        strong      weak(cos_x)")
for r in rows:
    print(f"{r.scheme:<12} {r.h:8.5f}  {r.strong_rmse:.3e}  {r.weak_err:.3e}")

# weak errors at this path count are noisy, so the fit may drop rows
warnings.simplefilter("ignore")
for s in schemes:
    rs = [r for r in rows if r.scheme == s]
    strong = fit_order([r.h for r in rs], [r.strong_rmse for r in rs]).slope
    weak = fit_order([r.h for r in rs], [r.weak_err for r in rs]).slope
    print(f"{s:<12} strong slope {strong:.2f}   weak slope {weak:.2f}")
