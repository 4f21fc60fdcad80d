"""
Why plain Euler fails on -x^3
=============================

With the noise switched off and a large step, explicit Euler on the
Ginzburg-Landau drift overshoots further every step. The tamed scheme uses
the same increments and stays put.
"""

import numpy as np

from tamed_sde import TamingConfig, builtin_problem
from tamed_sde.problems import without_noise
from tamed_sde.schemes import integrate_batch

prob = without_noise(builtin_problem("ginzburg_landau_1d")).with_x0([3.0])

for scheme in ("euler_maruyama", "mte"):
    xs = [3.0]
    integrate_batch(scheme, prob, TamingConfig(), 0.5, np.zeros((8, 1, 1)),
                    observer=lambda k, x, xs=xs: xs.append(float(x[0, 0])))
    print(f"{scheme:>15}: " + "  ".join(f"{v:.3g}" for v in xs))
