"""
Geometry of the space of volume forms.

Every density is stored as a ratio F against the grid's reference volume
form mu_0.  The square-root map Phi(mu) = 2 sqrt(mu/mu_0) sends the L2
metric g~_V isometrically into L2(mu_0), where fixed-mass densities lie on
the sphere of radius 2 sqrt(V).  Intrinsic distances on that sphere are
great-circle arcs, extrinsic ones are chords.

Nothing here assumes a Kahler base: all functions work on any grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from scipy.integrate import simpson

from .ebin import LevelCrossings, solve_quadratic_level
from .grid import Density, GridSpec, check_same_grid, random_trig_field
from .report import Report

EQUIVALENCE_FACTOR = np.pi / (2 * np.sqrt(2))
MASS_RTOL = 1e-10
CONVERGENCE_TOL = 1e-6


@dataclass
class DensityPath:
    """Time samples of densities, ``ratios[j]`` relative to mu_0 at ``times[j]``."""

    grid: GridSpec
    times: np.ndarray
    ratios: np.ndarray

    def __len__(self) -> int:
        return len(self.times)

    def density(self, j: int) -> Density:
        return Density(self.grid, self.ratios[j])

    @property
    def totals(self) -> np.ndarray:
        return np.array([self.grid.integrate(r) for r in self.ratios])


def _ratio(alpha) -> np.ndarray:
    return alpha.ratio if isinstance(alpha, Density) else np.asarray(alpha, dtype=float)


def _require_positive(mu: Density, what: str) -> None:
    if not mu.is_positive:
        raise ValueError(f"{what} needs a strictly positive density")


def _require_same_mass(mu1: Density, mu2: Density) -> float:
    V = mu1.total
    if abs(mu2.total - V) > MASS_RTOL * max(abs(V), 1.0):
        raise ValueError(f"densities have different masses {mu1.total!r} and {mu2.total!r}")
    return V


# ---------------------------------------------------------------------------
# Metrics


def gtilde_inner(mu: Density, alpha, beta) -> float:
    """g~_V(alpha, beta) = integral of (alpha/mu)(beta/mu) mu.

    Tangent densities ``alpha``, ``beta`` are ratio arrays against mu_0.
    """
    _require_positive(mu, "gtilde_inner")
    a, b = _ratio(alpha), _ratio(beta)
    return mu.grid.integrate(a * b / mu.ratio)


def gV_inner(mu: Density, alpha, beta, tol: float = 1e-10) -> float:
    """g_V: the restriction of g~_V to mean-zero tangent densities."""
    for name, x in (("alpha", _ratio(alpha)), ("beta", _ratio(beta))):
        scale = mu.grid.integrate(np.abs(x))
        if abs(mu.grid.integrate(x)) > tol * max(scale, 1e-300):
            raise ValueError(f"{name} is not tangent to V (nonzero total)")
    return gtilde_inner(mu, alpha, beta)


# ---------------------------------------------------------------------------
# The square-root map


def phi_map(mu: Density) -> np.ndarray:
    """Phi(mu) = 2 sqrt(mu/mu_0) as a nonnegative half-density array."""
    return 2.0 * np.sqrt(mu.ratio)


def phi_inverse(grid: GridSpec, w) -> Density:
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ValueError("half-density must be nonnegative")
    return Density(grid, 0.25 * w * w)


def dphi(mu: Density, alpha) -> np.ndarray:
    """Differential of Phi at mu applied to the tangent density alpha."""
    _require_positive(mu, "dphi")
    return _ratio(alpha) / np.sqrt(mu.ratio)


def l2_norm(grid: GridSpec, w, reference=None) -> float:
    """Norm in L2(mu_0) (or L2(reference))."""
    r = None if reference is None else _ratio(reference)
    return float(np.sqrt(grid.integrate(np.asarray(w) ** 2, r)))


# ---------------------------------------------------------------------------
# Geodesics of g~_V (chords)


def tilv_geodesic(mu: Density, alpha, t: float) -> Density:
    """mu(t) = (1 + t alpha / (2 mu))^2 mu, the g~_V geodesic from (mu, alpha)."""
    _require_positive(mu, "tilv_geodesic")
    a = _ratio(alpha)
    return Density(mu.grid, (1 + t * a / (2 * mu.ratio)) ** 2 * mu.ratio)


def tilv_degenerates(mu: Density, alpha, t: float) -> bool:
    """True when the g~_V geodesic has touched zero somewhere by time t."""
    base = 1 + t * _ratio(alpha) / (2 * mu.ratio)
    return bool(np.any(base <= 0))


def tilv_mass_coefficients(mu: Density, alpha) -> tuple[float, float, float]:
    """Coefficients (c0, c1, c2) of total(mu(t)) = c0 + c1 t + c2 t^2."""
    a = _ratio(alpha)
    g = mu.grid
    return mu.total, g.integrate(a), 0.25 * g.integrate(a * a / mu.ratio)


def tilv_level_crossings(mu: Density, alpha, level: float | None = None) -> LevelCrossings:
    """Times where the g~_V geodesic from (mu, alpha) has total mass ``level``.

    Both roots of the mass quadratic are returned with multiplicity.  For
    mu in V and alpha tangent to V the two roots coincide at t = 0.
    """
    c0, c1, c2 = tilv_mass_coefficients(mu, alpha)
    level = c0 if level is None else level
    scale = 1.0 / max(float(np.max(np.abs(_ratio(alpha) / mu.ratio))), 1e-300)
    roots, tangential, degenerate = solve_quadratic_level(c0, c1, c2, level, scale)
    return LevelCrossings(roots, tangential, degenerate, (c0, c1, c2), 0.5 * c1)


# ---------------------------------------------------------------------------
# Geodesics of g_V (great circles)


def _cos_angle(mu1: Density, mu2: Density, reference=None) -> float:
    r = np.ones(mu1.grid.shape) if reference is None else _ratio(reference)
    V = mu1.grid.integrate(r)
    return mu1.grid.integrate(np.sqrt(mu1.ratio * mu2.ratio / (r * r)), r) / V


def _angle(mu1: Density, mu2: Density, reference=None) -> float:
    """Angle between Phi(mu1) and Phi(mu2) in L2(reference).

    Kahan's 2 atan2(|a - b|, |a + b|) form of arccos, accurate for nearby
    points; algebraically equal to arccos((1/V) int sqrt(mu1 mu2 / r^2) r).
    """
    grid = check_same_grid(mu1.grid, mu2.grid)
    r = np.ones(grid.shape) if reference is None else _ratio(reference)
    a = np.sqrt(mu1.ratio / r)
    b = np.sqrt(mu2.ratio / r)
    a = a / l2_norm(grid, a, r)
    b = b / l2_norm(grid, b, r)
    return 2.0 * float(np.arctan2(l2_norm(grid, a - b, r), l2_norm(grid, a + b, r)))


def geodesic_length(mu1: Density, mu2: Density) -> float:
    """T = 2 sqrt(V) arccos((1/V) int sqrt(F G) mu_0)."""
    V = _require_same_mass(mu1, mu2)
    return 2.0 * np.sqrt(V) * _angle(mu1, mu2)


def _geodesic_root(mu1, mu2, t, derivative=0):
    V = _require_same_mass(mu1, mu2)
    T = geodesic_length(mu1, mu2)
    sV = np.sqrt(V)
    sF, sG = np.sqrt(mu1.ratio), np.sqrt(mu2.ratio)
    if T == 0.0:
        return sF if derivative == 0 else np.zeros_like(sF)
    den = np.sin(0.5 * T / sV)
    if derivative == 0:
        return (np.sin(0.5 * (T - t) / sV) * sF + np.sin(0.5 * t / sV) * sG) / den
    w = 0.5 / sV
    if derivative == 1:
        return w * (-np.cos(0.5 * (T - t) / sV) * sF + np.cos(0.5 * t / sV) * sG) / den
    return -(w * w) * _geodesic_root(mu1, mu2, t, 0)


def calabi_geodesic(mu1: Density, mu2: Density, t: float) -> Density:
    """Point at arclength ``t`` on the unit-speed g_V geodesic from mu1 to mu2."""
    for mu in (mu1, mu2):
        _require_positive(mu, "calabi_geodesic")
    u = _geodesic_root(mu1, mu2, t)
    return Density(mu1.grid, u * u)


def calabi_geodesic_velocity(mu1: Density, mu2: Density, t: float) -> np.ndarray:
    """Closed-form F_t of the unit-speed geodesic (ratio array)."""
    u = _geodesic_root(mu1, mu2, t)
    return 2.0 * u * _geodesic_root(mu1, mu2, t, 1)


def calabi_geodesic_acceleration(mu1: Density, mu2: Density, t: float) -> np.ndarray:
    u = _geodesic_root(mu1, mu2, t)
    du = _geodesic_root(mu1, mu2, t, 1)
    return 2.0 * (du * du + u * _geodesic_root(mu1, mu2, t, 2))


def calabi_geodesic_path(mu1: Density, mu2: Density, times) -> DensityPath:
    times = np.asarray(times, dtype=float)
    ratios = np.stack([calabi_geodesic(mu1, mu2, t).ratio for t in times])
    return DensityPath(mu1.grid, times, ratios)


def endpoint_velocity(mu1: Density, mu2: Density) -> np.ndarray:
    """F_t at t = T from the terminal-velocity formula.

    G cot(T / (2 sqrt V)) / sqrt V - sqrt(F G) / (sqrt V sin(T / (2 sqrt V))).
    """
    V = _require_same_mass(mu1, mu2)
    T = geodesic_length(mu1, mu2)
    sV = np.sqrt(V)
    x = 0.5 * T / sV
    F, G = mu1.ratio, mu2.ratio
    return G / (sV * np.tan(x)) - np.sqrt(F * G) / (sV * np.sin(x))


def geodesic_equation_residual(F, F_t, F_tt, speed: float, V: float) -> np.ndarray:
    """F_t^2 - 2 F_tt F - (C^2/V) F^2 for speed C."""
    return F_t**2 - 2 * F_tt * F - (speed**2 / V) * F**2


def geodesic_checks(mu1: Density, mu2: Density, num: int = 65, tol: float = 1e-8,
                    length_tol: float = 1e-10, fd_tol: float = 1e-6) -> list[Report]:
    """Closed-form g_V geodesic checks between two positive densities of equal mass.

    Geodesic equation residual, constancy of unit speed, length against
    d_V (Simpson quadrature of the speed), and the terminal-velocity
    formula against a central difference of the path.
    """
    V = _require_same_mass(mu1, mu2)
    T = geodesic_length(mu1, mu2)
    times = np.linspace(0.0, T, num)
    resid, speeds = [], []
    for t in times:
        F = calabi_geodesic(mu1, mu2, t).ratio
        F_t = calabi_geodesic_velocity(mu1, mu2, t)
        F_tt = calabi_geodesic_acceleration(mu1, mu2, t)
        resid.append(np.max(np.abs(geodesic_equation_residual(F, F_t, F_tt, 1.0, V))) / np.max(F))
        speeds.append(np.sqrt(gtilde_inner(Density(mu1.grid, F), F_t, F_t)))
    resid_max = float(max(resid))
    speed_dev = float(np.max(np.abs(np.array(speeds) - 1.0)))
    length = float(simpson(speeds, x=times))
    dv = dV_distance(mu1, mu2)
    delta = 1e-4 * max(T, 1e-300)
    fd = (_geodesic_root(mu1, mu2, T + delta) ** 2 - _geodesic_root(mu1, mu2, T - delta) ** 2) / (2 * delta)
    ev = endpoint_velocity(mu1, mu2)
    fd_gap = float(np.max(np.abs(fd - ev)) / max(np.max(np.abs(ev)), 1e-300))
    ev_norm = np.sqrt(gtilde_inner(mu2, ev, ev))
    return [
        Report("geodesic_equation_residual", resid_max, 0.0, tol, tol, resid_max <= tol),
        Report("geodesic_unit_speed", float(np.mean(speeds)), 1.0, None, tol, speed_dev <= tol,
               {"max_deviation": speed_dev}),
        Report("geodesic_length_vs_dV", length, dv, None, length_tol,
               abs(length - dv) <= length_tol * max(dv, 1.0), {"T": T}),
        Report("terminal_velocity_fd", fd_gap, 0.0, fd_tol, fd_tol,
               fd_gap <= fd_tol and abs(ev_norm - 1.0) <= tol, {"velocity_norm": float(ev_norm)}),
    ]


# ---------------------------------------------------------------------------
# Distances


def dV_distance(mu1: Density, mu2: Density, reference=None) -> float:
    """Intrinsic distance on V: 2 sqrt(V) arccos((1/V) int sqrt(mu1 mu2 / mu0^2) mu0).

    ``reference`` optionally replaces mu_0 by another density of mass V.
    """
    V = _require_same_mass(mu1, mu2)
    if reference is not None:
        ref = reference if isinstance(reference, Density) else Density(mu1.grid, reference)
        if not ref.is_positive:
            raise ValueError("reference density must be positive")
        if abs(ref.total - V) > MASS_RTOL * max(V, 1.0):
            raise ValueError("reference density must have mass V")
    return 2.0 * np.sqrt(V) * _angle(mu1, mu2, reference)


def dtildeV_distance(mu1: Density, mu2: Density) -> float:
    """Extrinsic distance: the L2(mu_0) chord between Phi(mu1) and Phi(mu2)."""
    grid = check_same_grid(mu1.grid, mu2.grid)
    return l2_norm(grid, phi_map(mu2) - phi_map(mu1))


def l1_distance(mu1: Density, mu2: Density) -> float:
    grid = check_same_grid(mu1.grid, mu2.grid)
    return grid.integrate(np.abs(mu1.ratio - mu2.ratio))


def equivalence_check(mu1: Density, mu2: Density) -> Report:
    """d~_V <= d_V < (pi / (2 sqrt 2)) d~_V, plus x <= (pi/2) sin x at x = d_V / (2 sqrt V)."""
    V = _require_same_mass(mu1, mu2)
    dv = dV_distance(mu1, mu2)
    dt = dtildeV_distance(mu1, mu2)
    lower = dt <= dv
    upper = (dv < EQUIVALENCE_FACTOR * dt) or (dv == 0.0 and dt == 0.0)
    x = 0.5 * dv / np.sqrt(V)
    convexity = x - 0.5 * np.pi * np.sin(x) <= 0.0
    diameter = dv < np.pi * np.sqrt(V)
    return Report(
        "volume_form_equivalence",
        dv,
        dt,
        EQUIVALENCE_FACTOR,
        0.0,
        bool(lower and upper and convexity and diameter),
        {
            "ratio": dv / dt if dt > 0 else 1.0,
            "lower_ok": lower,
            "upper_ok": upper,
            "convexity_ok": convexity,
            "diameter_ok": diameter,
        },
    )


def chord_projection(mu1: Density, mu2: Density, t: float) -> Density:
    """Radial projection onto Phi(V) of the chord point at parameter t in [0, 1]."""
    V = _require_same_mass(mu1, mu2)
    w = (1 - t) * np.sqrt(mu1.ratio) + t * np.sqrt(mu2.ratio)
    v = mu1.grid.integrate(w * w)
    return Density(mu1.grid, (V / v) * w * w)


# ---------------------------------------------------------------------------
# Completion


def boundary_ray(mu: Density, G, num: int = 65, tol: float = 1e-10) -> tuple[DensityPath, float]:
    """Unit-speed g_V geodesic from mu in direction G, up to where it first degenerates.

    mu(t) = mu (G sqrt(V) sin(t / (2 sqrt V)) + cos(t / (2 sqrt V)))^2 with
    int G mu = 0 and int G^2 mu = 1.  The factor vanishes at node i at
    t_i = 2 sqrt(V) (pi/2 + arctan(G_i sqrt V)); T_max is the smallest.
    """
    grid = mu.grid
    G = np.asarray(G, dtype=float)
    V = mu.total
    if abs(grid.integrate(G, mu.ratio)) > tol * max(grid.integrate(np.abs(G), mu.ratio), 1e-300):
        raise ValueError("G must have zero mean against mu")
    if abs(grid.integrate(G * G, mu.ratio) - 1.0) > tol:
        raise ValueError("G must have unit L2(mu) norm")
    sV = np.sqrt(V)
    support = mu.ratio > 0
    t_nodes = 2 * sV * (0.5 * np.pi + np.arctan(G[support] * sV))
    t_max = float(np.min(t_nodes))

    def ratio_at(t):
        s = 0.5 * t / sV
        return mu.ratio * (G * sV * np.sin(s) + np.cos(s)) ** 2

    times = np.linspace(0.0, t_max, num)
    return DensityPath(grid, times, np.stack([ratio_at(t) for t in times])), t_max


def _converges(errors, tol=CONVERGENCE_TOL) -> bool:
    """Three final terms below tol, with a non-increasing trend."""
    e = np.asarray(errors, dtype=float)
    if len(e) < 3:
        return False
    tail = e[-3:]
    return bool(np.all(tail <= tol) and tail[1] <= tail[0] and tail[2] <= tail[1])


def l1_convergence_check(sequence, limit: Density, tol: float = CONVERGENCE_TOL) -> Report:
    """L1 convergence of volume forms against d_V convergence, computed separately."""
    l1 = np.array([l1_distance(mu, limit) for mu in sequence])
    dv = np.array([dV_distance(mu, limit) for mu in sequence])
    c_l1, c_dv = _converges(l1, tol), _converges(dv, tol)
    return Report("l1_dV_convergence_equivalence", float(l1[-1]), float(dv[-1]), None, tol,
                  c_l1 == c_dv, {"l1": l1, "dV": dv, "l1_converged": c_l1, "dV_converged": c_dv})


def l1_l2_equivalence(grid: GridSpec, f_seq, f, tol: float = CONVERGENCE_TOL) -> Report:
    """f_k -> f in L2 against f_k^2 -> f^2 in L1, for nonnegative functions."""
    f = np.asarray(f, dtype=float)
    if np.any(f < 0) or any(np.any(np.asarray(fk) < 0) for fk in f_seq):
        raise ValueError("functions must be nonnegative")
    l2 = np.array([l2_norm(grid, np.asarray(fk) - f) for fk in f_seq])
    l1 = np.array([grid.integrate(np.abs(np.asarray(fk) ** 2 - f**2)) for fk in f_seq])
    c2, c1 = _converges(l2, tol), _converges(l1, tol)
    return Report("l1_l2_equivalence", float(l2[-1]), float(l1[-1]), None, tol, c1 == c2,
                  {"l2": l2, "l1_of_squares": l1, "l2_converged": c2, "l1_converged": c1})


# ---------------------------------------------------------------------------
# Test densities


def random_density(grid: GridSpec, rng: np.random.Generator, contrast: float = 0.8,
                   max_mode: int = 2) -> Density:
    """Smooth positive density of mass V with max/min ratio about (1+c)/(1-c)."""
    if grid.is_torus:
        f = random_trig_field(grid, rng, max_mode=max_mode, amplitude=contrast)
    else:
        theta = grid.coordinates[0]
        c = rng.standard_normal(max_mode + 1)
        f = np.polynomial.legendre.legval(np.cos(theta), c)
        f = contrast * (f - f.mean()) / np.max(np.abs(f - f.mean()))
    return Density(grid, np.exp(f)).normalized()


def bump_pair(grid: GridSpec, eps: float, sharpness: float | None = None) -> tuple[Density, Density]:
    """Two densities concentrated on complementary halves, floor ``eps``.

    The halves are separated by a tanh step placed halfway between nodes;
    the default ``sharpness`` (4 N) makes the step complete within one
    cell.  As eps -> 0 the supports become disjoint and d_V / d~_V
    approaches pi / (2 sqrt 2).
    """
    N = grid.resolution
    kappa = 4.0 * N if sharpness is None else sharpness
    if grid.is_torus:
        u = np.sin(2 * np.pi * (grid.coordinates[0] + 0.5 / N))
    else:
        u = np.cos(grid.coordinates[0])
    s = 0.5 * (1 + np.tanh(kappa * u))
    return (Density(grid, eps + s).normalized(), Density(grid, eps + (1 - s)).normalized())


def blend_sequence(limit: Density, other: Density, count: int) -> list[Density]:
    """mu_k = (1 - 2^-k) limit + 2^-k other, k = 1..count (L1-convergent to limit)."""
    return [Density(limit.grid, (1 - 2.0**-k) * limit.ratio + 2.0**-k * other.ratio)
            for k in range(1, count + 1)]


def alternating_sequence(mu_a: Density, mu_b: Density, count: int) -> list[Density]:
    return [mu_a if k % 2 == 0 else mu_b for k in range(count)]
