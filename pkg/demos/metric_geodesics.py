"""Geodesics of the L2 metric on all Riemannian metrics.

They are integrated numerically; the volume form along them follows a
per-node quadratic law, which gives an independent check.
"""

import numpy as np

from kahlerlab import torus_grid
from kahlerlab import ebin, kahler
from kahlerlab.grid import random_trig_field, riemannian_volume

rng = np.random.default_rng(2)
grid = torus_grid(1, 32)
phi = kahler.random_potential(grid, rng)
g0 = kahler.potential_to_metric(grid, phi)

# Conformal initial velocity rho*g0 stays conformal, with a closed form.
rho = 0.5 * random_trig_field(grid, rng, max_mode=1)
for steps in (10, 20, 40):
    path = ebin.ebin_geodesic(grid, g0, rho[..., None, None] * g0, 1.0, steps, richardson=True)
    err = np.max(np.abs(path.metrics[-1] - ebin.conformal_geodesic(g0, rho, 1.0)))
    print(f"steps {steps:3d}: error {err:.2e}, Richardson estimate {path.info['error_estimate']:.2e}")

# A Kahler direction: the volume is quadratic in t and returns to its
# starting value only at t = 0.
h = kahler.nabla11(grid, kahler.random_potential(grid, rng))
path = ebin.ebin_geodesic(grid, g0, h, 1.0, 50)
vols = [riemannian_volume(grid, g).total for g in path.metrics]
print("\n t     volume")
for t, v in list(zip(path.times, vols))[::10]:
    print(f"{t:4.2f}  {v:.12f}")
lc = ebin.kahler_intersections(grid, g0, h)
print(f"volume = {lc.coefficients[0]:.6f} + {lc.coefficients[1]:.1e} t + {lc.coefficients[2]:.6f} t^2")
print(f"level crossings {lc.times} (tangential: {lc.tangential})")

# Adding a conformal component makes the crossing transverse.
lc = ebin.volume_crossings(grid, g0, h + 0.2 * g0)
print(f"with a trace component: crossings {tuple(round(t, 6) for t in lc.times)}")
