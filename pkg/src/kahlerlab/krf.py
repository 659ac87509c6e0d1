"""
Kahler-Ricci flow on the rotationally symmetric 2-sphere.

The reference metric is the round unit sphere (area 4 pi), which is
Kahler-Einstein: Ric = omega.  An axisymmetric potential phi(theta)
defines omega_phi = F omega with F = 1 + lap(phi), where lap is half the
Laplace-Beltrami operator.  The normalized flow

    phi_t = log F - f + phi - a(t)

(f the Ricci potential of the reference, zero for the round metric) is
integrated in the gauge where phi has zero mean, which fixes a(t) and
leaves omega(t) unchanged.

Time stepping is linearly implicit: with J = diag(1/F) lap + I the
Jacobian of the right-hand side,

    phi_new = phi + dt (I - dt J / 2)^-1 rhs(phi),

which is second order and A-stable.  The step is halved whenever F would
lose positivity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import solve_banded

from .grid import GridError, GridSpec, legendre_mode
from .kahler import PositivityError
from .report import Report, relative_gap

S_SUP_THRESHOLD = 1e-3
L1_RATE_THRESHOLD = 1e-8
TAIL_TOLERANCE = 1e-8
LENGTH_RTOL = 1e-4
GAUGES = ("mean-zero", "none")


def _require_sphere(grid: GridSpec) -> None:
    if grid.topology != "sphere-axisym":
        raise GridError("the flow is implemented on the axisymmetric sphere")


def volume_ratio(grid: GridSpec, phi) -> np.ndarray:
    """F = omega_phi / omega = 1 + lap(phi); raises PositivityError if F <= 0 somewhere."""
    F = 1.0 + grid.laplacian(phi)
    i = int(np.argmin(F))
    if F[i] <= 0:
        raise PositivityError((i,), F[i])
    return F


def scalar_curvature(grid: GridSpec, phi) -> np.ndarray:
    """Normalized scalar curvature s = tr_{omega_phi} Ric(omega_phi) = (1 - lap log F) / F.

    Equals n = 1 on the round sphere.
    """
    _require_sphere(grid)
    F = volume_ratio(grid, phi)
    return (1.0 - grid.laplacian(np.log(F))) / F


def ricci_potential(grid: GridSpec, reference_potential=None, tol: float = 1e-9) -> np.ndarray:
    """Ricci potential f of omega_ref = omega + i ddbar psi: i ddbar f = Ric - omega_ref.

    Solves lap_ref f = s_ref - 1, i.e. lap f = F_psi (s_ref - 1), normalized
    by (1/V) int e^f omega_ref = 1.  Zero for the round reference.
    """
    _require_sphere(grid)
    if reference_potential is None:
        return np.zeros(grid.shape)
    psi = np.asarray(reference_potential, dtype=float)
    F = volume_ratio(grid, psi)
    s = scalar_curvature(grid, psi)
    source = F * (s - 1.0)
    mean = grid.integrate(source)
    if abs(mean) > tol * max(grid.integrate(np.abs(source)), 1e-300):
        raise ValueError(f"Ricci source has nonzero mean {mean:.3e}")
    f = grid.solve_laplacian(source)
    return f - np.log(grid.integrate(np.exp(f), F) / grid.volume)


def initial_potential(grid: GridSpec, kind: str = "mode:2", amplitude: float = 0.05,
                      seed: int = 0) -> np.ndarray:
    """Initial data for the flow, mean-zero.

    ``"mode:l"`` gives amplitude * P_l(cos theta); ``"random"`` a seeded
    combination of P_1..P_4 with sup norm ``amplitude``; ``"zero"`` the
    round metric.
    """
    _require_sphere(grid)
    if kind == "zero":
        return np.zeros(grid.shape)
    if kind.startswith("mode:"):
        try:
            degree = int(kind.split(":", 1)[1])
        except ValueError as exc:
            raise ValueError(f"bad initial mode {kind!r}") from exc
        if degree < 0:
            raise ValueError("mode degree must be nonnegative")
        phi = amplitude * legendre_mode(grid, degree)
    elif kind == "random":
        rng = np.random.default_rng(seed)
        c = rng.standard_normal(4)
        phi = sum(ci * legendre_mode(grid, l) for l, ci in enumerate(c, start=1))
        phi = amplitude * phi / np.max(np.abs(phi))
    else:
        raise ValueError(f"unknown initial data {kind!r}")
    return phi - grid.mean(phi)


@dataclass
class FlowTrajectory:
    """Record of a flow run.

    Monitors are sampled at every accepted step (``times``); potentials
    only every ``save_every`` steps (``saved_times``).  ``speeds[j]`` and
    ``l1_increments[j]`` refer to the step from ``times[j]`` to
    ``times[j+1]``.
    """

    grid: GridSpec
    times: np.ndarray
    s_l2: np.ndarray
    s_sup: np.ndarray
    phidot_sup: np.ndarray
    phi_c0: np.ndarray
    volume: np.ndarray
    curvature_constraint: np.ndarray
    speeds: np.ndarray
    l1_increments: np.ndarray
    saved_times: np.ndarray
    potentials: np.ndarray
    gauge: str = "mean-zero"
    rejections: int = 0
    info: dict = field(default_factory=dict)

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def final_potential(self) -> np.ndarray:
        return self.potentials[-1]

    def cumulative_length(self) -> np.ndarray:
        """Running integral of ||s - 1||_{L2(omega(t))} (trapezoid rule)."""
        inc = 0.5 * np.diff(self.times) * (self.s_l2[1:] + self.s_l2[:-1])
        return np.concatenate([[0.0], np.cumsum(inc)])

    def table(self) -> dict[str, np.ndarray]:
        """Columns for the trajectory CSV."""
        return {
            "t": self.times,
            "s_minus_1_l2": self.s_l2,
            "phidot_sup": self.phidot_sup,
            "phi_c0": self.phi_c0,
            "dC_length": self.cumulative_length(),
        }


class _Stepper:
    def __init__(self, grid: GridSpec, f, gauge: str):
        self.grid = grid
        self.f = f
        self.gauge = gauge
        self.lap_band = grid.laplacian_matrix_banded()

    def rhs(self, phi, F):
        r = np.log(F) - self.f + phi
        if self.gauge == "mean-zero":
            r = r - self.grid.mean(r)
        return r

    def step(self, phi, F, r, dt):
        # (I - dt/2 J) in banded storage, J = diag(1/F) L + I
        L = self.lap_band
        ab = np.empty_like(L)
        ab[0, 1:] = -0.5 * dt * L[0, 1:] / F[:-1]
        ab[0, 0] = 0.0
        ab[1] = (1.0 - 0.5 * dt) - 0.5 * dt * L[1] / F
        ab[2, :-1] = -0.5 * dt * L[2, :-1] / F[1:]
        ab[2, -1] = 0.0
        new = phi + dt * solve_banded((1, 1), ab, r)
        if self.gauge == "mean-zero":
            new -= self.grid.mean(new)
        return new


def krf_integrate(grid: GridSpec, phi0, t_end: float, dt0: float = 1e-3, gauge: str = "mean-zero",
                  save_every: int | None = None, dt_min: float = 1e-12) -> FlowTrajectory:
    """Integrate the normalized Kahler-Ricci flow from ``phi0`` up to ``t_end``.

    Parameters
    ----------
    gauge : {"mean-zero", "none"}
        ``"mean-zero"`` subtracts the mean at every step; ``"none"`` sets
        a(t) = 0, so the constant mode grows but omega(t) is the same.
    save_every : int, optional
        Store the potential every this many steps (default: about 200
        snapshots per run).  The final state is always stored.
    """
    _require_sphere(grid)
    if gauge not in GAUGES:
        raise ValueError(f"gauge must be one of {GAUGES}")
    if t_end <= 0 or dt0 <= 0:
        raise ValueError("t_end and dt0 must be positive")
    phi = np.asarray(phi0, dtype=float).copy()
    grid.check_scalar(phi)
    if gauge == "mean-zero":
        phi -= grid.mean(phi)
    stepper = _Stepper(grid, ricci_potential(grid), gauge)
    if save_every is None:
        save_every = max(1, int(round(t_end / dt0 / 200)))

    w = grid.weights
    F = volume_ratio(grid, phi)
    rec = {k: [] for k in ("t", "s_l2", "s_sup", "phidot", "c0", "vol", "constraint")}
    speeds, l1 = [], []
    saved_t, saved = [], []

    def record(t, phi, F, r):
        s = (1.0 - grid.laplacian(np.log(F))) / F
        d = s - 1.0
        rec["t"].append(t)
        rec["s_l2"].append(np.sqrt(np.sum(w * F * d * d)))
        rec["s_sup"].append(np.max(np.abs(d)))
        rec["phidot"].append(np.max(np.abs(r)))
        rec["c0"].append(np.max(np.abs(phi)))
        rec["vol"].append(np.sum(w * F))
        rec["constraint"].append(np.sum(w * F * d))

    t, dt, n_steps, rejections = 0.0, float(dt0), 0, 0
    r = stepper.rhs(phi, F)
    record(t, phi, F, r)
    saved_t.append(t)
    saved.append(phi.copy())
    while t < t_end * (1 - 1e-14):
        h = min(dt, t_end - t)
        new = stepper.step(phi, F, r, h)
        F_new = 1.0 + grid.laplacian(new)
        if not np.all(np.isfinite(new)) or np.min(F_new) <= 0:
            rejections += 1
            dt *= 0.5
            if dt < dt_min:
                i = int(np.argmin(F_new))
                raise PositivityError((i,), F_new[i])
            continue
        dF = F_new - F
        F_mid = 0.5 * (F_new + F)
        speeds.append(np.sqrt(np.sum(w * (dF / h) ** 2 / F_mid)))
        l1.append(np.sum(w * np.abs(dF)))
        t += h
        phi, F = new, F_new
        n_steps += 1
        r = stepper.rhs(phi, F)
        record(t, phi, F, r)
        if n_steps % save_every == 0 or t >= t_end * (1 - 1e-14):
            saved_t.append(t)
            saved.append(phi.copy())

    return FlowTrajectory(
        grid=grid,
        times=np.array(rec["t"]),
        s_l2=np.array(rec["s_l2"]),
        s_sup=np.array(rec["s_sup"]),
        phidot_sup=np.array(rec["phidot"]),
        phi_c0=np.array(rec["c0"]),
        volume=np.array(rec["vol"]),
        curvature_constraint=np.array(rec["constraint"]),
        speeds=np.array(speeds),
        l1_increments=np.array(l1),
        saved_times=np.array(saved_t),
        potentials=np.stack(saved),
        gauge=gauge,
        rejections=rejections,
        info={"dt0": dt0, "dt_final": dt, "steps": n_steps},
    )


# ---------------------------------------------------------------------------
# Lengths and convergence


def dC_length_of_flow(traj: FlowTrajectory) -> float:
    """int ||s - 1||_{L2(omega(t))} dt over the recorded run (trapezoid rule)."""
    if len(traj.times) < 2:
        return 0.0
    return float(trapezoid(traj.s_l2, traj.times))


def volume_path_length(traj: FlowTrajectory) -> float:
    """g_V length of t -> omega(t), from per-step volume-form differences."""
    return float(np.sum(np.diff(traj.times) * traj.speeds))


def flow_length_report(traj: FlowTrajectory, tol: float = LENGTH_RTOL) -> Report:
    """Curvature form of the length against the direct g_V speed."""
    a, b = dC_length_of_flow(traj), volume_path_length(traj)
    gap = relative_gap(a, b)
    passed = gap <= tol or max(a, b) <= 1e-14
    return Report("flow_length_two_formulas", a, b, None, tol, passed, {"relative_gap": gap})


def fit_decay_rate(times, values, floor: float = 1e-13) -> float:
    """Exponential decay rate of ``values`` over its active phase.

    The active phase runs from the start until the values first come
    within a factor 10 of their terminal level (or of ``floor``); the
    log-linear fit uses the second half of it.  This ignores a late
    plateau, which on the sphere grid comes from the slow O(h^2) drift
    along the rotation-free automorphism directions.  Returns nan when
    fewer than 3 samples are usable.
    """
    times = np.asarray(times)
    values = np.asarray(values)
    level = 10.0 * max(float(values[-1]), floor)
    hits = np.nonzero(values <= level)[0]
    end = hits[0] if len(hits) else len(values) - 1
    if end < 2:
        return float("nan")
    t_end = times[end]
    mask = (times >= 0.5 * (times[0] + t_end)) & (times <= t_end) & (values > 0)
    if np.count_nonzero(mask) < 3:
        return float("nan")
    slope = np.polyfit(times[mask], np.log(values[mask]), 1)[0]
    return float(-slope)


def convergence_report(traj: FlowTrajectory, s_tol: float = S_SUP_THRESHOLD,
                       l1_rate_tol: float = L1_RATE_THRESHOLD, tail_tol: float = TAIL_TOLERANCE) -> Report:
    """Convergence diagnostics of a completed run.

    ``details["status"]`` is "converged" when the terminal sup|s - 1| and
    the L1 volume-form increment over the last unit of time are below
    their thresholds, and "inconclusive" otherwise; a finite run cannot
    certify divergence.  The length is declared finite when the fitted
    decay rate is positive and the geometric tail bound
    ||s - 1||(t_end) / rate is below ``tail_tol``.  The report passes
    when the two verdicts agree.
    """
    times = traj.times
    length = dC_length_of_flow(traj)
    final_s = float(traj.s_sup[-1])
    window = times[1:] > times[-1] - 1.0
    span = times[-1] - max(times[-1] - 1.0, times[0])
    l1_rate = float(np.sum(traj.l1_increments[window]) / span) if span > 0 else float("inf")
    stationary = bool(np.max(traj.s_l2) <= 1e-13)
    rate = float("inf") if stationary else fit_decay_rate(times, traj.s_l2)
    tail = 0.0 if stationary else (traj.s_l2[-1] / rate if rate > 0 else float("inf"))
    finite = bool(stationary or (rate > 0 and tail <= tail_tol))
    converged = bool(final_s <= s_tol and l1_rate <= l1_rate_tol)
    status = "converged" if converged else "inconclusive"
    return Report(
        "krf_convergence",
        final_s,
        None,
        s_tol,
        s_tol,
        converged == finite,
        {
            "status": status,
            "length_finite": finite,
            "dC_length": length,
            "volume_path_length": volume_path_length(traj),
            "decay_rate": rate,
            "tail_bound": tail,
            "l1_increment_rate": l1_rate,
            "phi_c0_max": float(np.max(traj.phi_c0)),
            "phidot_sup_max": float(np.max(traj.phidot_sup)),
            "t_end": float(times[-1]),
        },
    )


def cr_stability_report(grid: GridSpec, initial_data, t_end: float = 30.0, dt0: float = 1e-3) -> Report:
    """Run the flow from every initial potential and aggregate the verdicts.

    The sphere carries a Kahler-Einstein metric, so every run is expected
    to converge with finite length; the report passes when all do and
    every run is coherent.
    """
    runs = []
    for phi0 in initial_data:
        traj = krf_integrate(grid, phi0, t_end, dt0)
        conv = convergence_report(traj)
        runs.append({
            "status": conv.details["status"],
            "coherent": conv.passed,
            "length_finite": conv.details["length_finite"],
            "dC_length": conv.details["dC_length"],
            "decay_rate": conv.details["decay_rate"],
            "final_s_sup": conv.lhs,
        })
    all_converged = all(r["status"] == "converged" for r in runs)
    coherent = all(r["coherent"] for r in runs)
    verdict = "consistent with CR-stable" if all_converged else "inconclusive"
    return Report("cr_stability", float(sum(r["status"] == "converged" for r in runs)),
                  float(len(runs)), None, None, all_converged and coherent,
                  {"verdict": verdict, "runs": runs})
