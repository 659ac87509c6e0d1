"""Kahler metrics inside the space of all metrics, on a flat torus.

Run with ``python demos/kahler_submanifold.py``.
"""

import numpy as np

from kahlerlab import torus_grid
from kahlerlab import kahler
from kahlerlab.ebin import ebin_inner
from kahlerlab.grid import random_trig_field

rng = np.random.default_rng(0)
grid = torus_grid(1, 64)

# A Kahler potential phi gives the metric g_phi = g_0 + nabla11(phi).  A
# potential variation nu moves the metric in the direction nabla11(nu).
phi = kahler.random_potential(grid, rng, strength=0.5)
nu = random_trig_field(grid, rng, max_mode=2)
eta = random_trig_field(grid, rng, max_mode=2)
g = kahler.potential_to_metric(grid, phi)
h, k = kahler.nabla11(grid, nu), kahler.nabla11(grid, eta)

# The L2 metric on all metrics restricts to twice the Laplacian metric on potentials.
ambient = ebin_inner(grid, g, h, k)
intrinsic = kahler.calabi_inner(grid, phi, nu, eta)
print(f"g_E(h, k)     = {ambient:.12f}")
print(f"2 g_C(nu, eta) = {2 * intrinsic:.12f}")

# Tangent vectors to the Kahler metrics are pure trace "on average":
# g_E(h, h) = (1/2) int tr(g^-1 h)^2 dV.
print(kahler.trace_pairing_identity(grid, phi, h, k).line())

# The second fundamental form has strictly negative trace pairing, so no
# geodesic of the submanifold is a geodesic of the ambient space.
print(kahler.second_fundamental_pairing(grid, phi, nu).line())

# Angle between tangent vectors and conformal directions rho*g.
for n, grid_n in ((1, grid), (2, torus_grid(2, 8))):
    p = kahler.random_potential(grid_n, rng)
    hn = kahler.nabla11(grid_n, random_trig_field(grid_n, rng, max_mode=1))
    r = kahler.angle_check(grid_n, p, hn)
    print(f"n={n}: maximal angle {np.degrees(r.details['angle']):.6f} deg "
          f"(closed form {np.degrees(kahler.conformal_angle(n)):.6f} deg)")

# The Calabi distance and the distance chain for one pair of potentials.
psi = kahler.random_potential(grid, rng)
chain = kahler.equivalence_chain_check(grid, phi, psi)
d = chain.details
print(f"d_C = {d['dC']:.6f}, chord d~_V = {d['dtildeV']:.6f}, ratio {d['ratio']:.4f}")
for name, info in d["paths"].items():
    print(f"  {name:12s} L_E = {info['L_E']:.6f}")
print(f"  lifted geodesic: L_E / (sqrt2 L_C) - 1 = {d['lift_gap']:.1e}")
