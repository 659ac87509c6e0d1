"""Normalized Kahler-Ricci flow on the round two-sphere.

Axisymmetric potentials flow back to the round metric; the length of the
flow in the volume-form metric is finite and equals the integral of the
curvature deviation.
"""

import numpy as np

from kahlerlab import sphere_grid
from kahlerlab import krf

grid = sphere_grid(256)

for kind, amp in (("mode:1", 0.05), ("mode:2", 0.05), ("random", 0.05)):
    phi0 = krf.initial_potential(grid, kind, amp, seed=0)
    traj = krf.krf_integrate(grid, phi0, 30.0, 1e-3)
    conv = krf.convergence_report(traj)
    d = conv.details
    print(f"{kind:7s} status {d['status']:10s} sup|s-1| {conv.lhs:.1e}  rate {d['decay_rate']:.3f}  "
          f"length {d['dC_length']:.6f} (direct {d['volume_path_length']:.6f})")

# Decay of the curvature deviation for the P_2 run.
phi0 = krf.initial_potential(grid, "mode:2", 0.05)
traj = krf.krf_integrate(grid, phi0, 10.0, 1e-3)
print("\n  t     ||s-1||       length so far")
L = traj.cumulative_length()
for j in np.searchsorted(traj.times, np.arange(0, 11, 2.0)):
    j = min(j, len(traj.times) - 1)
    print(f"{traj.times[j]:5.1f}  {traj.s_l2[j]:.3e}  {L[j]:.8f}")
