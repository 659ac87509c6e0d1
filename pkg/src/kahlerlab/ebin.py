"""
The space of Riemannian metrics with its L2 (Ebin) metric.

Tangent vectors at a metric g are symmetric tensor fields h; the inner
product is the integral of tr(g^-1 h g^-1 k) against dV_g.  Geodesics are
integrated numerically with classical RK4 applied node by node, and the
closed-form quadratic law for their volume forms serves as an independent
check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson, trapezoid

from .grid import (
    Density,
    GridSpec,
    SingularMetricError,
    is_j_invariant,
    min_eigenvalue,
    pointwise_trace,
    pointwise_trace_pair,
    riemannian_volume,
)
from .report import Report

BLOWUP_FACTOR = 1e-8
DISCRIMINANT_RTOL = 1e-12


@dataclass
class MetricPath:
    """Time samples of a path of metrics.

    ``velocities`` is optional; when present, lengths use the exact
    velocities instead of finite differences.
    """

    grid: GridSpec
    times: np.ndarray
    metrics: np.ndarray
    velocities: np.ndarray | None = None
    degenerate_at: float | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.metrics = np.asarray(self.metrics, dtype=float)
        if self.times.ndim != 1 or len(self.times) != len(self.metrics):
            raise ValueError("times and metrics must have matching length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        for g in self.metrics:
            self.grid.check_tensor(g)

    def __len__(self) -> int:
        return len(self.times)


def ebin_inner(grid: GridSpec, g, h, k) -> float:
    """g_E(h, k) at g: integral of tr(g^-1 h g^-1 k) dV_g."""
    vol = riemannian_volume(grid, g)
    return grid.integrate(pointwise_trace_pair(g, h, k), vol.ratio)


def ebin_norm(grid: GridSpec, g, h) -> float:
    return float(np.sqrt(ebin_inner(grid, g, h, h)))


# ---------------------------------------------------------------------------
# Submersion onto volume forms


def submersion_pi(grid: GridSpec, g) -> Density:
    """pi(g) = dV_g."""
    return riemannian_volume(grid, g)


def dpi(grid: GridSpec, g, h) -> np.ndarray:
    """Differential of pi as a density ratio: tr(g^-1 h)/2 dV_g."""
    return 0.5 * pointwise_trace(g, h) * riemannian_volume(grid, g).ratio


def tangent_split(grid: GridSpec, g, h) -> tuple[np.ndarray, np.ndarray]:
    """Split h into (vertical, horizontal) = (traceless, pure-trace) parts."""
    grid.check_tensor(h)
    d = h.shape[-1]
    h_hor = (pointwise_trace(g, h) / d)[..., None, None] * g
    return h - h_hor, h_hor


# ---------------------------------------------------------------------------
# Connection and geodesics


def ebin_connection(g, h, k) -> np.ndarray:
    """Levi-Civita connection of g_E on constant vector fields h, k.

    -h g^-1 k/2 - k g^-1 h/2 - tr(g^-1 h g^-1 k) g/4 + tr(g^-1 h) k/4 + tr(g^-1 k) h/4
    """
    Ah = np.linalg.solve(g, h)
    Ak = np.linalg.solve(g, k)
    tr_h = np.trace(Ah, axis1=-2, axis2=-1)[..., None, None]
    tr_k = np.trace(Ak, axis1=-2, axis2=-1)[..., None, None]
    tr_hk = np.einsum("...ij,...ji->...", Ah, Ak)[..., None, None]
    return (-0.5 * h @ Ak - 0.5 * k @ Ah - 0.25 * tr_hk * g
            + 0.25 * tr_h * k + 0.25 * tr_k * h)


def geodesic_acceleration(g, v) -> np.ndarray:
    """g_tt along a g_E geodesic with velocity v (= -connection(v, v))."""
    A = np.linalg.solve(g, v)
    tr_A = np.trace(A, axis1=-2, axis2=-1)[..., None, None]
    tr_AA = np.einsum("...ij,...ji->...", A, A)[..., None, None]
    return v @ A + 0.25 * tr_AA * g - 0.5 * tr_A * v


def _below_floor(g, floor) -> bool:
    # Cholesky of g - floor*I succeeds iff every eigenvalue exceeds floor
    d = g.shape[-1]
    try:
        np.linalg.cholesky(g - floor * np.eye(d))
    except np.linalg.LinAlgError:
        return True
    return False


def _rk4(g0, h, t_end, steps, floor):
    dt = t_end / steps
    g, v = g0.copy(), h.copy()
    gs, vs, ts = [g.copy()], [v.copy()], [0.0]
    degenerate_at = None
    for j in range(steps):
        k1g, k1v = v, geodesic_acceleration(g, v)
        g2, v2 = g + 0.5 * dt * k1g, v + 0.5 * dt * k1v
        k2g, k2v = v2, geodesic_acceleration(g2, v2)
        g3, v3 = g + 0.5 * dt * k2g, v + 0.5 * dt * k2v
        k3g, k3v = v3, geodesic_acceleration(g3, v3)
        g4, v4 = g + dt * k3g, v + dt * k3v
        k4g, k4v = v4, geodesic_acceleration(g4, v4)
        g_new = g + dt / 6 * (k1g + 2 * k2g + 2 * k3g + k4g)
        v_new = v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        t = (j + 1) * dt
        # a metric can pass through zero between samples; the stage
        # values catch that
        if not np.all(np.isfinite(g_new)) or any(_below_floor(s, floor) for s in (g2, g3, g4, g_new)):
            degenerate_at = t
            break
        g, v = g_new, v_new
        gs.append(g.copy())
        vs.append(v.copy())
        ts.append(t)
    return np.array(ts), np.stack(gs), np.stack(vs), degenerate_at


def ebin_geodesic(grid: GridSpec, g0, h, t_end: float, steps: int,
                  richardson: bool = False) -> MetricPath:
    """Integrate the g_E geodesic equation from g(0) = g0, g_t(0) = h.

    Integration stops at the first step where the smallest nodal
    eigenvalue falls below ``1e-8`` times its initial value; that time is
    recorded in ``degenerate_at`` and the returned path ends just before it.
    With ``richardson=True`` the run is repeated with half the step and
    ``info["error_estimate"]`` holds the RK4 Richardson estimate of the
    sup-norm error of the returned (coarse) path at the final common time.
    """
    grid.check_tensor(g0)
    grid.check_tensor(h)
    g0 = np.asarray(g0, dtype=float)
    h = np.asarray(h, dtype=float)
    lam0 = np.min(min_eigenvalue(g0))
    if lam0 <= 0:
        raise SingularMetricError("initial metric is not positive definite")
    floor = BLOWUP_FACTOR * lam0
    ts, gs, vs, degenerate_at = _rk4(g0, h, t_end, steps, floor)
    path = MetricPath(grid, ts, gs, vs, degenerate_at)
    if richardson:
        ts2, gs2, _, _ = _rk4(g0, h, t_end, 2 * steps, floor)
        m = min(len(ts) - 1, (len(ts2) - 1) // 2)
        diff = np.max(np.abs(gs[m] - gs2[2 * m]))
        path.info["error_estimate"] = float(diff * 16.0 / 15.0)
        path.info["richardson_time"] = float(ts[m])
    return path


# ---------------------------------------------------------------------------
# Volume forms along geodesics


def _volume_law(g0, h):
    d = h.shape[-1]
    A = np.linalg.solve(g0, h)
    tr = np.trace(A, axis1=-2, axis2=-1)
    A0 = A - (tr / d)[..., None, None] * np.eye(d)
    return tr, np.einsum("...ij,...ji->...", A0, A0)


def volume_factor(g0, h, t, _law=None) -> np.ndarray:
    """Closed-form ratio mu(t)/mu(0) along the g_E geodesic with data (g0, h).

    ((1 + t tr(g^-1 h)/4)^2 + n/8 tr((g^-1 h_0)^2) t^2), h_0 the traceless part.
    """
    n = h.shape[-1] // 2
    tr, tr00 = _volume_law(g0, h) if _law is None else _law
    t = float(t)
    return (1 + 0.25 * t * tr) ** 2 + (n / 8) * tr00 * t**2


def volume_along_geodesic(grid: GridSpec, g0, h, t: float) -> Density:
    mu0 = riemannian_volume(grid, g0)
    return Density(grid, volume_factor(g0, h, t) * mu0.ratio)


@dataclass
class LevelCrossings:
    """Times where the total volume returns to its initial value.

    ``times`` lists both roots of the quadratic, with multiplicity; a
    tangential contact shows up as a double root.  ``degenerate`` is set
    when the volume is constant in t.
    """

    times: tuple[float, ...]
    tangential: bool
    degenerate: bool
    coefficients: tuple[float, float, float]
    first_variation: float


def solve_quadratic_level(c0, c1, c2, level, scale):
    """Roots of c0 + c1 t + c2 t^2 = level, solved in the variable t / scale.

    Returns ``(roots, tangential, degenerate)``.
    """
    a, b, c = c2 * scale**2, c1 * scale, c0 - level
    size = abs(a) + abs(b) + abs(c)
    if abs(a) <= DISCRIMINANT_RTOL * max(size, abs(level)):
        if abs(b) <= DISCRIMINANT_RTOL * max(size, abs(level)):
            return (), False, True
        return (float(-c / b * scale),), False, False
    disc = b * b - 4 * a * c
    if abs(disc) <= DISCRIMINANT_RTOL * size**2:
        r = -b / (2 * a)
        return (float(r * scale), float(r * scale)), True, False
    if disc < 0:
        return (), False, False
    q = -0.5 * (b + np.copysign(np.sqrt(disc), b))
    roots = sorted([q / a, c / q])
    return tuple(float(r * scale) for r in roots), False, False


def volume_crossings(grid: GridSpec, g0, h) -> LevelCrossings:
    """Times where Vol(g(t)) = Vol(g0) along the g_E geodesic from (g0, h).

    Vol(t) is fitted by least squares through 5 evenly spaced samples of
    the closed-form volume law and the roots are taken from the quadratic
    formula.  A discriminant within ``1e-12`` (relative) of zero is a
    double root.
    """
    mu0 = riemannian_volume(grid, g0)
    V0 = mu0.total
    A = np.linalg.solve(g0, h)
    scale = 1.0 / max(float(np.max(np.abs(A))), 1e-300)
    ts = np.linspace(0.0, scale, 5)
    vols = np.array([volume_along_geodesic(grid, g0, h, t).total for t in ts])
    # fit in the rescaled variable s = t / scale for conditioning
    c = np.polynomial.polynomial.polyfit(ts / scale, vols, 2)
    c0, c1, c2 = c[0], c[1] / scale, c[2] / scale**2
    first_variation = 0.5 * grid.integrate(pointwise_trace(g0, h), mu0.ratio)
    roots, tangential, degenerate = solve_quadratic_level(c0, c1, c2, V0, scale)
    return LevelCrossings(roots, tangential, degenerate, (float(c0), float(c1), float(c2)),
                          float(first_variation))


def kahler_intersections(grid: GridSpec, g0, h, tol: float = 1e-9) -> LevelCrossings:
    """Volume-level crossings for a geodesic leaving H tangentially.

    ``h`` must be tangent to H at ``g0``: J-invariant with vanishing
    first variation of volume.  The first-variation term is returned in
    the result; the quadratic then has the double root t = 0, i.e. the
    geodesic meets the volume level of H only at its starting point.
    """
    if not (is_j_invariant(g0) and is_j_invariant(h)):
        raise ValueError("g0 and h must be J-invariant")
    mu0 = riemannian_volume(grid, g0)
    tr = pointwise_trace(g0, h)
    scale = grid.integrate(np.abs(tr), mu0.ratio)
    first = grid.integrate(tr, mu0.ratio)
    if abs(first) > tol * max(scale, 1e-300):
        raise ValueError(f"h is not tangent to H: mean trace {first:.3e}")
    if scale == 0.0:
        return LevelCrossings((), False, True, (mu0.total, 0.0, 0.0), 0.0)
    return volume_crossings(grid, g0, h)


def conformal_geodesic(g0, rho, t) -> np.ndarray:
    """Closed form for h = rho g0: g(t) = (1 + n rho t / 2)^(2/n) g0, node by node."""
    n = g0.shape[-1] // 2
    factor = (1 + 0.5 * n * np.asarray(rho) * t) ** (2.0 / n)
    return factor[..., None, None] * g0


def volume_quadratic_check(grid: GridSpec, g0, h, t_end: float, steps: int = 100,
                           tol: float = 1e-10) -> Report:
    """Fit a quadratic to Vol(g(t)) along the integrated geodesic.

    Reports the relative sup residual of the least-squares fit and the
    gap between the fitted coefficients and the closed-form volume law.
    """
    path = ebin_geodesic(grid, g0, h, t_end, steps)
    vols = np.array([riemannian_volume(grid, g).total for g in path.metrics])
    s = path.times / path.times[-1]
    c = np.polynomial.polynomial.polyfit(s, vols, 2)
    resid = float(np.max(np.abs(np.polynomial.polynomial.polyval(s, c) - vols)) / np.max(np.abs(vols)))
    mu0 = riemannian_volume(grid, g0).ratio
    coeffs = _volume_law(g0, h)
    law = np.array([grid.integrate(volume_factor(g0, h, t, coeffs), mu0) for t in path.times])
    law_gap = float(np.max(np.abs(law - vols)) / np.max(np.abs(vols)))
    return Report("ebin_volume_quadratic", resid, 0.0, tol, tol, bool(resid <= tol),
                  {"closed_form_gap": law_gap, "degenerate_at": path.degenerate_at,
                   "t_end": float(path.times[-1])})


# ---------------------------------------------------------------------------
# Path lengths


def speed_integral(times, speeds) -> float:
    times = np.asarray(times)
    if len(times) < 2:
        return 0.0
    dts = np.diff(times)
    if len(times) % 2 == 1 and len(times) >= 3 and np.allclose(dts, dts[0], rtol=1e-12, atol=0):
        return float(simpson(speeds, x=times))
    return float(trapezoid(speeds, times))


def path_length_ebin(path: MetricPath) -> float:
    """g_E length of a sampled path.

    With stored velocities: composite Simpson (uniform odd sampling) or
    trapezoid rule on nodal speeds.  Without: sum over segments of the
    speed of the difference quotient measured at the segment midpoint.
    """
    grid = path.grid
    if path.velocities is not None:
        speeds = np.array([np.sqrt(max(ebin_inner(grid, g, v, v), 0.0))
                           for g, v in zip(path.metrics, path.velocities)])
        return speed_integral(path.times, speeds)
    total = 0.0
    for j in range(len(path) - 1):
        dt = path.times[j + 1] - path.times[j]
        gm = 0.5 * (path.metrics[j] + path.metrics[j + 1])
        v = (path.metrics[j + 1] - path.metrics[j]) / dt
        total += dt * np.sqrt(max(ebin_inner(grid, gm, v, v), 0.0))
    return float(total)


def projected_path_length(path: MetricPath) -> float:
    """Length of pi(path) in the volume-form metric g~_V.

    g~_V(a, a) = integral of (a/mu)^2 mu with a = d pi(g_t).  Uses the same
    quadrature as :func:`path_length_ebin`.
    """
    grid = path.grid

    def speed(g, v):
        mu = riemannian_volume(grid, g).ratio
        a = 0.5 * pointwise_trace(g, v) * mu
        return np.sqrt(grid.integrate(a * a / mu))

    if path.velocities is not None:
        speeds = np.array([speed(g, v) for g, v in zip(path.metrics, path.velocities)])
        return speed_integral(path.times, speeds)
    total = 0.0
    for j in range(len(path) - 1):
        dt = path.times[j + 1] - path.times[j]
        gm = 0.5 * (path.metrics[j] + path.metrics[j + 1])
        total += dt * speed(gm, (path.metrics[j + 1] - path.metrics[j]) / dt)
    return float(total)
