"""
Taming a super-linear drift
===========================

Classic taming shrinks every drift value a little. The modified version
leaves the drift alone until ``gamma * h**alpha * |b|`` passes 1 and only
then bends it towards the cap ``2 / (gamma * h**alpha)``.
"""

import numpy as np

from tamed_sde import TamingConfig, cutoff_psi, tame_classic, tame_modified

# the cut-off: zero below 1, identity above 2, smooth in between
r = np.array([0.5, 1.0, 1.25, 1.5, 1.75, 2.0, 3.0])
for ri, pi in zip(r, cutoff_psi(r)):
    print(f"psi({ri:4.2f}) = {pi:.6f}")

# Ginzburg-Landau drift on a grid, h = 2^-6
h = 2.0**-6
x = np.linspace(0, 6, 13)
b = -(x**3 + 1.875 * x)
mod = tame_modified(b[:, None], h, TamingConfig())[:, 0]
cls = tame_classic(b[:, None], h, 0.5)[:, 0]

print("\n   x        b(x)     modified     classic")
for row in zip(x, b, mod, cls):
    print("%5.2f %11.4f %11.4f %11.4f" % row)

# below the threshold the modified drift is the drift, bit for bit
inside = np.sqrt(h) * np.abs(b) <= 1
print("\nidentity region exact:", np.array_equal(mod[inside], b[inside]))
