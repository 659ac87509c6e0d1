"""
Kahler potentials on flat tori and the Calabi metric.

A potential phi defines the metric g_phi = g_0 + nabla11(phi), where
nabla11 is the J-invariant part of the real Hessian.  Tangent vectors to
the space of potentials are functions nu; they embed into symmetric
tensors as nabla11(nu).  The Calabi inner product

    g_C(nu, eta) = int lap_phi(nu) lap_phi(eta) dV_phi

is half of the Ebin inner product of the embedded tensors.

All operations here need a torus grid (spectral Hessians).
"""

from __future__ import annotations

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .densities import (
    EQUIVALENCE_FACTOR,
    calabi_geodesic,
    calabi_geodesic_velocity,
    dtildeV_distance,
    dV_distance,
    geodesic_length,
)
from .ebin import (
    MetricPath,
    speed_integral,
    ebin_connection,
    ebin_inner,
    path_length_ebin,
    projected_path_length,
)
from .grid import (
    Density,
    GridError,
    GridSpec,
    SingularMetricError,
    complex_hessian,
    is_j_invariant,
    min_eigenvalue,
    pointwise_trace,
    pointwise_trace_pair,
    project_11,
    random_trig_field,
    real_to_hermitian,
    riemannian_volume,
)
from .report import Report, relative_gap

MEAN_ZERO_TOL = 1e-9
SOLVER_RTOL = 1e-10


class PositivityError(SingularMetricError):
    """g_0 + nabla11(phi) fails to be positive definite.

    Attributes ``node`` (index tuple) and ``eigenvalue`` locate the worst node.
    """

    def __init__(self, node, eigenvalue):
        self.node = tuple(int(i) for i in node)
        self.eigenvalue = float(eigenvalue)
        super().__init__(f"metric not positive at node {self.node}: min eigenvalue {self.eigenvalue:.3e}")


def _require_torus(grid: GridSpec) -> None:
    if not grid.is_torus:
        raise GridError("Kahler potentials are only supported on torus grids")


def nabla11(grid: GridSpec, nu) -> np.ndarray:
    """J-invariant part of the real Hessian of ``nu``."""
    _require_torus(grid)
    return project_11(grid.hessian(np.asarray(nu, dtype=float)))


def potential_to_metric(grid: GridSpec, phi) -> np.ndarray:
    """g_phi = g_0 + nabla11(phi); raises :class:`PositivityError` if not positive."""
    g = grid.reference_metric() + nabla11(grid, phi)
    lam = min_eigenvalue(g)
    i = np.unravel_index(np.argmin(lam), grid.shape)
    if lam[i] <= 0:
        raise PositivityError(i, lam[i])
    return g


def normalize_potential(grid: GridSpec, phi) -> np.ndarray:
    """Shift ``phi`` so that it integrates to zero against the reference volume."""
    phi = np.asarray(phi, dtype=float)
    return phi - grid.mean(phi)


def random_potential(grid: GridSpec, rng: np.random.Generator, strength: float = 0.5,
                     max_mode: int = 1) -> np.ndarray:
    """Seeded mean-zero potential with |nabla11 phi| <= strength in every eigenvalue.

    The metric g_phi then has eigenvalues in [1 - strength, 1 + strength].
    """
    phi = random_trig_field(grid, rng, max_mode=max_mode)
    lam = np.abs(np.linalg.eigvalsh(nabla11(grid, phi))).max()
    return strength * phi / lam


def complex_laplacian(grid: GridSpec, g, nu) -> np.ndarray:
    """lap_g(nu) = tr(g^-1 nabla11(nu)) / 2."""
    return 0.5 * pointwise_trace(g, nabla11(grid, nu))


def ddbar_pairing(grid: GridSpec, g, nu, eta) -> np.ndarray:
    """Pointwise (i ddbar nu, i ddbar eta)_g = tr(G^-1 R G^-1 S) in complex form."""
    G = real_to_hermitian(g)
    R = np.linalg.solve(G, complex_hessian(grid, nu))
    S = R if eta is nu else np.linalg.solve(G, complex_hessian(grid, eta))
    return np.einsum("...ij,...ji->...", R, S).real


def calabi_inner(grid: GridSpec, phi, nu, eta) -> float:
    """g_C(nu, eta) = int lap_phi(nu) lap_phi(eta) dV_phi."""
    g = potential_to_metric(grid, phi)
    vol = riemannian_volume(grid, g).ratio
    return grid.integrate(complex_laplacian(grid, g, nu) * complex_laplacian(grid, g, eta), vol)


def calabi_inner_ddbar(grid: GridSpec, phi, nu, eta) -> float:
    """The same inner product written as int (i ddbar nu, i ddbar eta) dV_phi."""
    g = potential_to_metric(grid, phi)
    vol = riemannian_volume(grid, g).ratio
    return grid.integrate(ddbar_pairing(grid, g, nu, eta), vol)


def check_isometric_embedding(grid: GridSpec, phi, nu, eta, tol: float = 1e-8) -> Report:
    """g_E(nabla11 nu, nabla11 eta) at g_phi against 2 g_C(nu, eta).

    The left side goes through real tensors and the Ebin inner product,
    the right side through complex Hessians.
    """
    g = potential_to_metric(grid, phi)
    lhs = ebin_inner(grid, g, nabla11(grid, nu), nabla11(grid, eta))
    rhs = 2.0 * calabi_inner_ddbar(grid, phi, nu, eta)
    scale = max(abs(lhs), abs(rhs))
    gap = 0.0 if scale == 0 else abs(lhs - rhs) / scale
    # both sides vanish for constant directions; compare absolutely there
    passed = gap <= tol or abs(lhs - rhs) <= tol * 1e-6
    return Report("isometric_embedding", lhs, rhs, None, tol, passed,
                  {"relative_gap": gap, "laplacian_form": 2.0 * calabi_inner(grid, phi, nu, eta)})


def trace_pairing_identity(grid: GridSpec, phi, h, k, tol: float = 1e-8) -> Report:
    """g_E(h, k) = 1/2 int tr(g^-1 h) tr(g^-1 k) dV_g for h, k tangent to H.

    Also reports the split of h into its pure-trace part h_T, for which
    g_E(h, h) = n g_E(h_T, h_T).
    """
    h = np.asarray(h, dtype=float)
    k = np.asarray(k, dtype=float)
    if not (is_j_invariant(h) and is_j_invariant(k)):
        raise ValueError("h and k must be J-invariant")
    g = potential_to_metric(grid, phi)
    vol = riemannian_volume(grid, g).ratio
    lhs = ebin_inner(grid, g, h, k)
    tr_h, tr_k = pointwise_trace(g, h), pointwise_trace(g, k)
    rhs = 0.5 * grid.integrate(tr_h * tr_k, vol)
    n = grid.n
    h_T = (tr_h / (2 * n))[..., None, None] * g
    norm_h = ebin_inner(grid, g, h, h)
    norm_hT = ebin_inner(grid, g, h_T, h_T)
    gap = relative_gap(lhs, rhs)
    gap_T = relative_gap(norm_h, n * norm_hT)
    small = tol * 1e-6
    passed = (gap <= tol or abs(lhs - rhs) <= small) and (gap_T <= tol or abs(norm_h - n * norm_hT) <= small)
    return Report("trace_pairing", lhs, rhs, None, tol, passed,
                  {"relative_gap": gap, "norm_h_sq": norm_h, "n_norm_hT_sq": n * norm_hT,
                   "trace_part_gap": gap_T})


# ---------------------------------------------------------------------------
# Inverse Laplacian


def solve_complex_laplacian(grid: GridSpec, phi, rhs, rtol: float = SOLVER_RTOL) -> np.ndarray:
    """Solve lap_phi(u) = rhs with int u dV_phi = 0.

    ``rhs`` must integrate to zero against dV_phi (relative ``1e-9``); it is
    then projected exactly.  For n = 1, lap_phi = lap_0 / F with F the
    volume ratio, so u = lap_0^-1(F rhs) is exact.  For n = 2 the operator
    is not self-adjoint on the grid and the bordered system

        lap_phi(u) + lam = rhs,   int u dV_phi = 0

    is solved by GMRES, preconditioned by the flat spectral inverse.
    """
    g = potential_to_metric(grid, phi)
    F = riemannian_volume(grid, g).ratio
    rhs = np.asarray(rhs, dtype=float)
    mean = grid.integrate(rhs, F)
    scale = grid.integrate(np.abs(rhs), F)
    if abs(mean) > MEAN_ZERO_TOL * max(scale, 1e-300):
        raise ValueError(f"right-hand side is not mean-zero against dV_phi ({mean:.3e})")
    rhs = rhs - grid.mean(rhs, F)
    if grid.n == 1:
        return grid.solve_laplacian(F * rhs, ratio=F)

    shape, M = grid.shape, grid.size
    Ginv = np.linalg.inv(g)
    w = grid.weights * F

    # unknowns and residuals live on the resolved modes, where the
    # collocated operator is invertible modulo constants
    def apply(x):
        u = grid.project_resolved(x[:M].reshape(shape))
        Lu = 0.5 * np.einsum("...ij,...ji->...", Ginv, nabla11(grid, u))
        out = np.empty(M + 1)
        out[:M] = grid.project_resolved(Lu + x[M]).ravel()
        out[M] = np.sum(w * u)
        return out

    def precondition(r):
        ru = r[:M].reshape(shape)
        out = np.empty(M + 1)
        u = grid.solve_laplacian(ru)
        u += (r[M] - np.sum(w * u)) / np.sum(w)
        out[:M] = u.ravel()
        out[M] = grid.mean(ru)
        return out

    A = LinearOperator((M + 1, M + 1), matvec=apply, dtype=float)
    P = LinearOperator((M + 1, M + 1), matvec=precondition, dtype=float)
    b = np.concatenate([grid.project_resolved(rhs).ravel(), [0.0]])
    x, info = gmres(A, b, rtol=0.1 * rtol, atol=0.0, restart=200, maxiter=50, M=P)
    residual = np.linalg.norm(apply(x) - b) / max(np.linalg.norm(b), 1e-300)
    if info != 0 or residual > rtol:
        raise RuntimeError(f"GMRES did not converge (info={info}, residual={residual:.2e})")
    u = grid.project_resolved(x[:M].reshape(shape))
    return u - grid.mean(u, F)


# ---------------------------------------------------------------------------
# Connections and second fundamental form


def calabi_connection(grid: GridSpec, phi, nu, eta) -> np.ndarray:
    """Levi-Civita connection of g_C on constant directions nu, eta.

    lap_phi^-1 of lap(nu) lap(eta)/2 + (1/2V) int lap(nu) lap(eta) dV_phi
    - (i ddbar nu, i ddbar eta); mean-zero against dV_phi.
    """
    g = potential_to_metric(grid, phi)
    F = riemannian_volume(grid, g).ratio
    V = grid.integrate(F)
    prod = complex_laplacian(grid, g, nu) * complex_laplacian(grid, g, eta)
    rhs = 0.5 * prod + 0.5 * grid.integrate(prod, F) / V - ddbar_pairing(grid, g, nu, eta)
    return solve_complex_laplacian(grid, phi, rhs)


def second_fundamental_trace(grid: GridSpec, phi, nu, eta) -> np.ndarray:
    """tr(g^-1 II(h, k)) for h = nabla11 nu, k = nabla11 eta.

    -(n/2) tr(g^-1 h g^-1 k) + tr(g^-1 h) tr(g^-1 k)/4 - g_E(h, k)/(2V).
    """
    g = potential_to_metric(grid, phi)
    h, k = nabla11(grid, nu), nabla11(grid, eta)
    V = riemannian_volume(grid, g).total
    n = grid.n
    return (-0.5 * n * pointwise_trace_pair(g, h, k)
            + 0.25 * pointwise_trace(g, h) * pointwise_trace(g, k)
            - ebin_inner(grid, g, h, k) / (2 * V))


def second_fundamental_pairing(grid: GridSpec, phi, nu, tol: float = 1e-6) -> Report:
    """int tr(g^-1 II(h, h)) dV_g against -(n/2) |h|_E^2, h = nabla11 nu.

    Passes when the two agree to ``tol`` and the integral is strictly negative.
    """
    g = potential_to_metric(grid, phi)
    vol = riemannian_volume(grid, g).ratio
    lhs = grid.integrate(second_fundamental_trace(grid, phi, nu, nu), vol)
    h = nabla11(grid, nu)
    rhs = -0.5 * grid.n * ebin_inner(grid, g, h, h)
    gap = relative_gap(lhs, rhs)
    return Report("second_fundamental_pairing", lhs, rhs, 0.0, tol, bool(gap <= tol and lhs < 0),
                  {"relative_gap": gap})


def second_fundamental_from_connections(grid: GridSpec, phi, nu, eta) -> np.ndarray:
    """tr(g^-1 (ebin_connection(h, k) - nabla11 calabi_connection(nu, eta)))."""
    g = potential_to_metric(grid, phi)
    h, k = nabla11(grid, nu), nabla11(grid, eta)
    diff = ebin_connection(g, h, k) - nabla11(grid, calabi_connection(grid, phi, nu, eta))
    return pointwise_trace(g, diff)


# ---------------------------------------------------------------------------
# Conformal directions


def conformal_angle(n: int) -> float:
    """Angle between T_gH and the conformal directions: arccos(n^-1/2)."""
    if n < 1:
        raise ValueError("dimension must be positive")
    return float(np.arccos(1.0 / np.sqrt(n)))


def angle_check(grid: GridSpec, phi, h, basis=None, tol: float = 1e-8) -> Report:
    """Maximize g_E(h, rho g) / (|h| |rho g|) over rho in span(basis).

    ``basis`` is an array of scalar fields (first axis indexes the basis);
    by default every nodal indicator, for which the maximizer is
    rho = tr(g^-1 h).  Passes when the maximum stays below n^-1/2 + tol;
    ``details["attained"]`` records whether it equals n^-1/2 within tol.
    """
    h = np.asarray(h, dtype=float)
    g = potential_to_metric(grid, phi)
    vol = riemannian_volume(grid, g).ratio
    norm_h = np.sqrt(ebin_inner(grid, g, h, h))
    if norm_h == 0:
        raise ValueError("h must be nonzero")
    n = grid.n
    tr_h = pointwise_trace(g, h)
    w = grid.weights * vol
    if basis is None:
        # diagonal Gram matrix: maximizer rho = tr(g^-1 h)
        rho = tr_h
        best = np.sqrt(np.sum(w * tr_h**2) / (2 * n)) / norm_h
    else:
        B = np.asarray(basis, dtype=float).reshape(len(basis), -1)
        b = B @ (w * tr_h).ravel()
        M = 2 * n * (B * w.ravel()) @ B.T
        c = np.linalg.lstsq(M, b, rcond=None)[0]
        best = np.sqrt(max(float(b @ c), 0.0)) / norm_h
        rho = (c @ B).reshape(grid.shape)
    target = 1.0 / np.sqrt(n)
    align = grid.integrate(rho * tr_h, vol) / np.sqrt(
        grid.integrate(rho**2, vol) * grid.integrate(tr_h**2, vol))
    return Report("conformal_angle", float(best), target, target, tol, bool(best <= target + tol),
                  {"angle": float(np.arccos(min(best, 1.0))), "attained": abs(best - target) <= tol,
                   "alignment_with_trace": float(align)})


# ---------------------------------------------------------------------------
# Distances and the equivalence chain


def volume_form(grid: GridSpec, phi) -> Density:
    return riemannian_volume(grid, potential_to_metric(grid, phi))


def dC_distance(grid: GridSpec, phi1, phi2) -> float:
    """Calabi distance, computed as d_V between the two volume forms."""
    return dV_distance(volume_form(grid, phi1), volume_form(grid, phi2))


def potential_from_volume(grid: GridSpec, mu: Density) -> np.ndarray:
    """Potential with dV_phi = mu (n = 1 only, where the equation is linear)."""
    _require_torus(grid)
    if grid.n != 1:
        raise GridError("volume-form inversion is only implemented in complex dimension 1")
    return grid.solve_laplacian(mu.ratio - 1.0)


def calabi_lift(grid: GridSpec, phi1, phi2, num: int = 65) -> MetricPath:
    """The g_C geodesic from phi1 to phi2 as a metric path (n = 1).

    Parametrized by arclength on [0, d_C].  ``info`` holds the potentials
    and their time derivatives.
    """
    mu1, mu2 = volume_form(grid, phi1), volume_form(grid, phi2)
    if grid.n != 1:
        raise GridError("calabi_lift needs complex dimension 1")
    T = geodesic_length(mu1, mu2)
    times = np.linspace(0.0, T, num) if T > 0 else np.arange(num, dtype=float)
    pots, pot_vel, metrics, vels = [], [], [], []
    for t in times:
        mu = calabi_geodesic(mu1, mu2, t) if T > 0 else mu1
        F_t = calabi_geodesic_velocity(mu1, mu2, t) if T > 0 else np.zeros(grid.shape)
        phi = grid.solve_laplacian(mu.ratio - 1.0)
        pots.append(phi)
        pot_vel.append(grid.solve_laplacian(F_t))
        metrics.append(potential_to_metric(grid, phi))
        vels.append(nabla11(grid, pot_vel[-1]))
    return MetricPath(grid, times, np.stack(metrics), np.stack(vels),
                      info={"potentials": np.stack(pots), "potential_velocities": np.stack(pot_vel)})


def calabi_path_length(grid: GridSpec, times, potentials, velocities) -> float:
    """g_C length of a path of potentials with known velocities."""
    speeds = np.array([np.sqrt(max(calabi_inner(grid, p, v, v), 0.0))
                       for p, v in zip(potentials, velocities)])
    return speed_integral(times, speeds)


def straight_segment(grid: GridSpec, phi1, phi2, num: int = 65) -> MetricPath:
    """The affine segment (1-t) g_phi1 + t g_phi2, t in [0, 1]."""
    g1, g2 = potential_to_metric(grid, phi1), potential_to_metric(grid, phi2)
    times = np.linspace(0.0, 1.0, num)
    metrics = np.stack([(1 - t) * g1 + t * g2 for t in times])
    return MetricPath(grid, times, metrics, np.broadcast_to(g2 - g1, metrics.shape).copy())


def equivalence_chain_check(grid: GridSpec, phi1, phi2, trial_paths=None, num: int = 65,
                            tol: float = 1e-8) -> Report:
    """Check every computable link of the distance comparison.

    (a) d_C = d_V and d~_V <= d_V < (pi / (2 sqrt 2)) d~_V;
    (b) d~_V <= sqrt(n/2) L_E(path) for every trial path;
    (c) at n = 1, L_E = sqrt(2) L_C along the lifted g_C geodesic.

    Default trial paths: the straight segment and, at n = 1, the lift.
    """
    mu1, mu2 = volume_form(grid, phi1), volume_form(grid, phi2)
    n = grid.n
    d_C = dC_distance(grid, phi1, phi2)
    d_V = dV_distance(mu1, mu2)
    d_t = dtildeV_distance(mu1, mu2)
    identical = d_V == 0.0 and d_t == 0.0
    a_ok = d_C == d_V and d_t <= d_V * (1 + tol) and (identical or d_V < EQUIVALENCE_FACTOR * d_t)
    details: dict = {"dC": d_C, "dV": d_V, "dtildeV": d_t,
                     "ratio": d_V / d_t if d_t > 0 else 1.0, "a_ok": a_ok}

    paths = {"straight": straight_segment(grid, phi1, phi2, num)}
    lift = None
    if n == 1 and not identical:
        lift = calabi_lift(grid, phi1, phi2, num)
        paths["calabi_lift"] = lift
    if trial_paths:
        for j, p in enumerate(trial_paths):
            paths[f"trial_{j}"] = p
    b_ok = True
    bound = np.sqrt(n / 2)
    path_info = {}
    for name, p in paths.items():
        L_E = path_length_ebin(p)
        L_proj = projected_path_length(p)
        ok = d_t <= bound * L_E * (1 + tol) + tol * 1e-6
        path_info[name] = {"L_E": L_E, "projected_length": L_proj, "ok": ok}
        b_ok = b_ok and ok
    details["paths"] = path_info
    details["b_ok"] = b_ok

    c_ok = True
    if lift is not None:
        L_E = path_info["calabi_lift"]["L_E"]
        L_C = calabi_path_length(grid, lift.times, lift.info["potentials"],
                                 lift.info["potential_velocities"])
        c_gap = relative_gap(L_E, np.sqrt(2) * L_C)
        c_ok = c_gap <= tol
        details.update({"L_E_lift": L_E, "L_C_lift": L_C, "lift_gap": c_gap,
                        "lift_length_vs_dC": relative_gap(L_C, d_C)})
    elif n != 1:
        details["lift"] = "not available for n = 2"
    details["c_ok"] = c_ok
    return Report("equivalence_chain", d_V, d_t, EQUIVALENCE_FACTOR, tol,
                  bool(a_ok and b_ok and c_ok), details)


__all__ = [
    "PositivityError",
    "nabla11",
    "potential_to_metric",
    "normalize_potential",
    "random_potential",
    "complex_laplacian",
    "ddbar_pairing",
    "calabi_inner",
    "calabi_inner_ddbar",
    "check_isometric_embedding",
    "trace_pairing_identity",
    "solve_complex_laplacian",
    "calabi_connection",
    "second_fundamental_trace",
    "second_fundamental_pairing",
    "second_fundamental_from_connections",
    "conformal_angle",
    "angle_check",
    "volume_form",
    "dC_distance",
    "potential_from_volume",
    "calabi_lift",
    "calabi_path_length",
    "straight_segment",
    "equivalence_chain_check",
]
