"""
Random batch drift
==================

The GL drift splits into ``-x^3`` and ``-1.875 x``. Each step picks one part
uniformly and doubles it, which is unbiased for the full drift.
"""

import numpy as np

from tamed_sde import SeedSpec, builtin_problem
from tamed_sde.problems import BatchSampler, batch_drift

gl = builtin_problem("ginzburg_landau_1d")
sampler = BatchSampler(gl.drift.component_count)
x = np.array([[1.0]])

for xi in range(sampler.component_count):
    print(f"xi={xi}: {batch_drift(gl.drift, sampler, xi, 0.0, x)[0, 0]:+.4f}")
print(f"full : {gl.drift(0.0, x)[0, 0]:+.4f}")

# the same average from a counter-addressed index stream
u = SeedSpec(3).uniforms(path=0, count=200_000, draw_type=1)
idx = sampler.draw(u)
est = batch_drift(gl.drift, sampler, idx, 0.0, np.ones((len(idx), 1)))
print(f"mean of 2e5 draws: {est.mean():+.4f}")
