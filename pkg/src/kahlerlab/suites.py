"""Named collections of checks, each returning a list of :class:`Report`.

Every suite is deterministic given its seed.
"""

from __future__ import annotations

import numpy as np

from . import densities as dens
from . import ebin
from . import kahler
from . import krf
from .grid import GridError, GridSpec, random_trig_field, reference_density
from .report import Report, equality_report


def _torus(grid: GridSpec, suite: str) -> None:
    if not grid.is_torus:
        raise GridError(f"the {suite} suite needs a torus grid")


def kahler_suite(grid: GridSpec, seed: int = 0, count: int = 5, tol: float = 1e-8) -> list[Report]:
    """Embedding, trace-pairing, second-fundamental-form and angle identities."""
    _torus(grid, "kahler")
    rng = np.random.default_rng(seed)
    out = []
    for j in range(count):
        phi = kahler.random_potential(grid, rng)
        nu = random_trig_field(grid, rng, max_mode=2)
        eta = random_trig_field(grid, rng, max_mode=2)
        h, k = kahler.nabla11(grid, nu), kahler.nabla11(grid, eta)
        for r in (
            kahler.check_isometric_embedding(grid, phi, nu, eta, tol),
            kahler.trace_pairing_identity(grid, phi, h, k, tol),
            kahler.second_fundamental_pairing(grid, phi, nu, max(tol, 1e-6)),
            kahler.angle_check(grid, phi, h, tol=max(tol, 1e-6)),
            equality_report("calabi_two_forms", kahler.calabi_inner(grid, phi, nu, eta),
                            kahler.calabi_inner_ddbar(grid, phi, nu, eta), 1e-10),
        ):
            r.details["sample"] = j
            out.append(r)
    return out


def ebin_suite(grid: GridSpec, seed: int = 0, count: int = 3, tol: float = 1e-8) -> list[Report]:
    """Geodesics of the L2 metric: conformal closed form, volume law, level crossings."""
    _torus(grid, "ebin")
    rng = np.random.default_rng(seed)
    out = []
    for j in range(count):
        phi = kahler.random_potential(grid, rng)
        g0 = kahler.potential_to_metric(grid, phi)
        rho = 0.5 * random_trig_field(grid, rng, max_mode=1)
        path = ebin.ebin_geodesic(grid, g0, rho[..., None, None] * g0, 0.5, 50)
        exact = ebin.conformal_geodesic(g0, rho, path.times[-1])
        err = float(np.max(np.abs(path.metrics[-1] - exact)) / np.max(np.abs(exact)))
        out.append(Report("ebin_conformal_geodesic", err, 0.0, tol, tol, err <= tol, {"sample": j}))

        nu = kahler.random_potential(grid, rng, strength=0.5)
        h = kahler.nabla11(grid, nu)
        out.append(ebin.volume_quadratic_check(grid, g0, h, 0.5, steps=50, tol=max(tol * 1e-2, 1e-10)))
        lc = ebin.kahler_intersections(grid, g0, h)
        ok = len(lc.times) == 2 and all(abs(t) <= 1e-9 for t in lc.times) and lc.coefficients[2] > 0
        out.append(Report("kahler_volume_crossings", float(len(lc.times)), 2.0, None, None, ok,
                          {"times": list(lc.times), "tangential": lc.tangential,
                           "coefficients": list(lc.coefficients)}))
    return out


def density_suite(grid: GridSpec, seed: int = 0, count: int = 100, tol: float = 1e-8) -> list[Report]:
    """Volume-form geometry: equivalence bounds, geodesics, boundary rays, completion."""
    rng = np.random.default_rng(seed)
    out = pair_suite(grid, "random", seed, count)
    out += pair_suite(grid, "bump", seed, 3)
    mu1, mu2 = dens.random_density(grid, rng), dens.random_density(grid, rng)
    out += dens.geodesic_checks(mu1, mu2, tol=tol)
    out.append(boundary_ray_report(grid, rng))
    out += completion_reports(grid, rng)
    return out


def pair_suite(grid: GridSpec, pair: str, seed: int = 0, count: int = 100) -> list[Report]:
    """``equivalence_check`` on seeded random pairs or on the bump family."""
    if pair == "random":
        rng = np.random.default_rng(seed)
        reports = []
        for j in range(count):
            mu1, mu2 = dens.random_density(grid, rng), dens.random_density(grid, rng)
            r = dens.equivalence_check(mu1, mu2)
            r.details["pair"] = j
            reports.append(r)
        return reports
    if pair == "bump":
        reports = []
        for eps in (1e-1, 1e-2, 1e-3)[:max(count, 1)]:
            r = dens.equivalence_check(*dens.bump_pair(grid, eps))
            r.details["eps"] = eps
            reports.append(r)
        last = reports[-1].details["ratio"]
        reports.append(Report("bump_family_ratio", last, dens.EQUIVALENCE_FACTOR, 1.10, None,
                              bool(1.10 <= last < dens.EQUIVALENCE_FACTOR)))
        return reports
    raise ValueError(f"unknown pair kind {pair!r}")


def boundary_ray_report(grid: GridSpec, rng: np.random.Generator) -> Report:
    mu = dens.random_density(grid, rng)
    if grid.is_torus:
        G = np.sin(2 * np.pi * grid.coordinates[0])
    else:
        G = np.cos(grid.coordinates[0])
    G = G - grid.integrate(G, mu.ratio) / mu.total
    G = G / np.sqrt(grid.integrate(G * G, mu.ratio))
    path, t_max = dens.boundary_ray(mu, G)
    terminal = path.density(len(path) - 1)
    V = mu.total
    mass_gap = abs(terminal.total - V) / V
    bound = np.pi * np.sqrt(V)
    return Report("boundary_ray", t_max, None, bound, 1e-10,
                  bool(mass_gap <= 1e-10 and t_max < bound and np.min(terminal.ratio) <= 1e-12 * np.max(terminal.ratio)),
                  {"terminal_mass_gap": mass_gap, "terminal_min": float(np.min(terminal.ratio))})


def completion_reports(grid: GridSpec, rng: np.random.Generator) -> list[Report]:
    """L1 against d_V convergence, and L2 against L1-of-squares, both ways."""
    mu = dens.random_density(grid, rng)
    nu = dens.random_density(grid, rng)
    out = []
    r = dens.l1_convergence_check(dens.blend_sequence(mu, nu, 60), mu)
    r.details["sequence"] = "convergent"
    out.append(r)
    a, b = dens.bump_pair(grid, 1e-2)
    r = dens.l1_convergence_check(dens.alternating_sequence(a, b, 40), a)
    r.details["sequence"] = "alternating"
    out.append(r)
    const = [reference_density(grid)] * 5
    r = dens.l1_convergence_check(const, reference_density(grid))
    r.details["sequence"] = "constant"
    out.append(r)
    f = dens.phi_map(mu) / 2
    g = dens.phi_map(nu) / 2
    r = dens.l1_l2_equivalence(grid, [(1 - 2.0**-k) * f + 2.0**-k * g for k in range(1, 61)], f)
    r.details["sequence"] = "convergent"
    out.append(r)
    fa, fb = dens.phi_map(a) / 2, dens.phi_map(b) / 2
    r = dens.l1_l2_equivalence(grid, [fa if k % 2 == 0 else fb for k in range(40)], fa)
    r.details["sequence"] = "alternating"
    out.append(r)
    return out


def krf_suite(grid: GridSpec, seed: int = 0, count: int = 1, tol: float = krf.LENGTH_RTOL,
              t_end: float = 3.0, dt0: float = 1e-3) -> list[Report]:
    """Short flow runs: round fixed point, conservation laws, length cross-check.

    ``count`` seeded random initial potentials are flowed up to ``t_end``.
    """
    if grid.topology != "sphere-axisym":
        raise GridError("the krf suite needs the sphere grid")
    out = []
    fixed = krf.krf_integrate(grid, np.zeros(grid.shape), t_end, dt0)
    c0 = float(np.max(fixed.phi_c0))
    out.append(Report("krf_fixed_point", c0, 0.0, 1e-10, 1e-10, c0 <= 1e-10))
    for j in range(count):
        phi0 = krf.initial_potential(grid, "random", 0.05, seed + j)
        traj = krf.krf_integrate(grid, phi0, t_end, dt0)
        vol_gap = float(np.max(np.abs(traj.volume - grid.volume)) / grid.volume)
        cc = float(np.max(np.abs(traj.curvature_constraint)))
        for r in (
            Report("krf_volume_conservation", vol_gap, 0.0, 1e-8, 1e-8, vol_gap <= 1e-8),
            Report("krf_total_curvature", cc, 0.0, 1e-10, 1e-10, cc <= 1e-10),
            krf.flow_length_report(traj, tol),
        ):
            r.details["run"] = j
            out.append(r)
    return out


SUITES = {
    "kahler": kahler_suite,
    "ebin": ebin_suite,
    "densities": density_suite,
    "krf": krf_suite,
}
