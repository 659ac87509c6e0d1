"""Geometry of volume forms through the square-root map.

Volume forms of a fixed mass sit on a round sphere after mu -> 2 sqrt(mu),
so their intrinsic distance is an arc and the extrinsic one a chord.
"""

import numpy as np

from kahlerlab import sphere_grid, torus_grid
from kahlerlab import densities as dens

rng = np.random.default_rng(1)
grid = torus_grid(1, 64)

mu1, mu2 = dens.random_density(grid, rng), dens.random_density(grid, rng)
arc = dens.dV_distance(mu1, mu2)
chord = dens.dtildeV_distance(mu1, mu2)
print(f"arc {arc:.6f}  chord {chord:.6f}  ratio {arc / chord:.6f}  bound {dens.EQUIVALENCE_FACTOR:.6f}")

# Densities with nearly disjoint supports push the ratio towards the bound.
print("\n eps     ratio")
for eps in (1e-1, 1e-2, 1e-3, 1e-4):
    a, b = dens.bump_pair(grid, eps)
    print(f"{eps:6.0e}  {dens.dV_distance(a, b) / dens.dtildeV_distance(a, b):.6f}")

# The closed-form geodesic between mu1 and mu2, sampled by arclength.
for r in dens.geodesic_checks(mu1, mu2):
    print(r.line())

# Following a geodesic until it leaves the open set of positive densities.
sphere = sphere_grid(256)
mu = dens.random_density(sphere, rng)
G = np.cos(sphere.coordinates[0])
G -= sphere.integrate(G, mu.ratio) / mu.total
G /= np.sqrt(sphere.integrate(G * G, mu.ratio))
path, t_max = dens.boundary_ray(mu, G)
print(f"\nray reaches the boundary at t = {t_max:.6f} < pi sqrt(V) = {np.pi * np.sqrt(mu.total):.6f}")
print(f"terminal min density {path.ratios[-1].min():.2e}, mass {path.totals[-1]:.12f}")
