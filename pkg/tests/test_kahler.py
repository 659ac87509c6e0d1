import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.optimize import minimize

from kahlerlab.ebin import ebin_inner
from kahlerlab.grid import GridError, is_j_invariant, random_trig_field, sphere_grid, torus_grid
from kahlerlab.kahler import (
    PositivityError,
    angle_check,
    calabi_connection,
    calabi_inner,
    calabi_inner_ddbar,
    calabi_lift,
    check_isometric_embedding,
    complex_laplacian,
    conformal_angle,
    dC_distance,
    equivalence_chain_check,
    nabla11,
    normalize_potential,
    potential_from_volume,
    potential_to_metric,
    random_potential,
    second_fundamental_from_connections,
    second_fundamental_pairing,
    second_fundamental_trace,
    solve_complex_laplacian,
    trace_pairing_identity,
    volume_form,
)

TWO_PI = 2 * np.pi


def curved_potential(grid, amp):
    x = grid.coordinates
    return amp * np.sin(TWO_PI * x[0]) * np.sin(TWO_PI * x[1])


def test_nabla11_of_constant_is_zero(t2):
    assert np.max(np.abs(nabla11(t2, np.full(t2.shape, 3.0)))) < 1e-12


def test_nabla11_of_sine(t2):
    # oracle: Hessian blocks A = diag(-4pi^2 sin), C = 0, averaged by the projection
    x, _ = t2.coordinates
    h = nabla11(t2, np.sin(TWO_PI * x))
    expected = -2 * np.pi**2 * np.sin(TWO_PI * x)
    np.testing.assert_allclose(h[..., 0, 0], expected, atol=1e-10)
    np.testing.assert_allclose(h[..., 1, 1], expected, atol=1e-10)
    np.testing.assert_allclose(h[..., 0, 1], 0.0, atol=1e-10)


def test_nabla11_trace_is_twice_laplacian(t4, rng):
    phi = random_potential(t4, rng, strength=0.4)
    nu = random_trig_field(t4, rng, max_mode=1)
    g = potential_to_metric(t4, phi)
    tr = np.trace(np.linalg.solve(g, nabla11(t4, nu)), axis1=-2, axis2=-1)
    np.testing.assert_allclose(tr, 2 * complex_laplacian(t4, g, nu), atol=1e-12)


def test_flat_reference_and_affinity(t2):
    assert np.array_equal(potential_to_metric(t2, np.zeros(t2.shape)), t2.reference_metric())
    phi = curved_potential(t2, 0.002)
    g1 = potential_to_metric(t2, phi)
    g3 = potential_to_metric(t2, 3 * phi)
    np.testing.assert_allclose(g3 - t2.reference_metric(), 3 * (g1 - t2.reference_metric()), atol=1e-13)


def test_positivity_boundary_is_located(t2):
    # critical amplitude 1/(2 pi^2): min eigenvalue 1 - 2 pi^2 eps at x1 = 1/4
    x, _ = t2.coordinates
    eps_star = 1 / (2 * np.pi**2)
    g = potential_to_metric(t2, 0.99 * eps_star * np.sin(TWO_PI * x))
    assert np.min(np.linalg.eigvalsh(g)) == pytest.approx(0.01, abs=1e-10)
    with pytest.raises(PositivityError) as info:
        potential_to_metric(t2, 1.01 * eps_star * np.sin(TWO_PI * x))
    assert info.value.node[0] == t2.resolution // 4
    assert info.value.eigenvalue == pytest.approx(-0.01, abs=1e-10)


def test_random_potential_respects_strength(t4, rng):
    phi = random_potential(t4, rng, strength=0.3)
    lam = np.linalg.eigvalsh(potential_to_metric(t4, phi))
    assert lam.min() >= 0.7 - 1e-12 and lam.max() <= 1.3 + 1e-12


def test_normalize_potential(t2, rng):
    phi = normalize_potential(t2, random_trig_field(t2, rng, mean_zero=False) + 4.0)
    assert abs(t2.integrate(phi)) < 1e-14


def test_calabi_inner_of_sine(t2):
    x, _ = t2.coordinates
    nu = np.sin(TWO_PI * x)
    zero = np.zeros(t2.shape)
    assert calabi_inner(t2, zero, nu, nu) == pytest.approx(2 * np.pi**4, rel=1e-12)
    assert calabi_inner(t2, zero, np.ones(t2.shape), np.ones(t2.shape)) == 0.0


@pytest.mark.parametrize("grid", [torus_grid(1, 32), torus_grid(2, 8)], ids=str)
def test_calabi_two_forms_agree(grid, rng):
    phi = random_potential(grid, rng, strength=0.5)
    nu = random_trig_field(grid, rng, max_mode=1)
    eta = random_trig_field(grid, rng, max_mode=1)
    a = calabi_inner(grid, phi, nu, eta)
    b = calabi_inner_ddbar(grid, phi, nu, eta)
    assert abs(a - b) <= 1e-10 * abs(a)


def test_isometric_embedding_flat_sine(t2):
    x, _ = t2.coordinates
    nu = np.sin(TWO_PI * x)
    r = check_isometric_embedding(t2, np.zeros(t2.shape), nu, nu, tol=1e-10)
    assert r.passed
    assert r.rhs == pytest.approx(4 * np.pi**4, rel=1e-12)


def test_isometric_embedding_constant_direction(t2):
    one = np.ones(t2.shape)
    r = check_isometric_embedding(t2, curved_potential(t2, 0.02), one, one)
    assert r.passed and abs(r.lhs) < 1e-12


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), strength=st.floats(0.05, 0.8))
def test_isometric_embedding_property(seed, strength):
    grid = torus_grid(1, 16)
    r = np.random.default_rng(seed)
    phi = random_potential(grid, r, strength=strength)
    nu = random_trig_field(grid, r, max_mode=2)
    eta = random_trig_field(grid, r, max_mode=2)
    assert check_isometric_embedding(grid, phi, nu, eta).passed


def test_trace_pairing_flat_sine(t2):
    x, _ = t2.coordinates
    h = nabla11(t2, np.sin(TWO_PI * x))
    r = trace_pairing_identity(t2, np.zeros(t2.shape), h, h)
    assert r.passed
    assert r.lhs == pytest.approx(2 * 2 * np.pi**4, rel=1e-12)


def test_trace_pairing_zero(t2):
    z = np.zeros(t2.shape + (2, 2))
    r = trace_pairing_identity(t2, np.zeros(t2.shape), z, z)
    assert r.passed and r.lhs == 0.0


def test_trace_pairing_n2_and_trace_part(t4, rng):
    phi = random_potential(t4, rng)
    h = nabla11(t4, random_trig_field(t4, rng, max_mode=1))
    k = nabla11(t4, random_trig_field(t4, rng, max_mode=1))
    r = trace_pairing_identity(t4, phi, h, k)
    assert r.passed
    assert r.details["trace_part_gap"] <= 1e-8


def test_trace_pairing_rejects_non_j_invariant(t2):
    h = np.zeros(t2.shape + (2, 2))
    h[..., 0, 0] = 1.0
    with pytest.raises(ValueError):
        trace_pairing_identity(t2, np.zeros(t2.shape), h, h)


@pytest.mark.parametrize("grid", [torus_grid(1, 32), torus_grid(2, 8)], ids=str)
def test_solve_complex_laplacian_inverts(grid, rng):
    phi = random_potential(grid, rng, strength=0.5)
    g = potential_to_metric(grid, phi)
    F = volume_form(grid, phi).ratio
    u_true = random_trig_field(grid, rng, max_mode=1)
    u_true -= grid.mean(u_true, F)
    rhs = complex_laplacian(grid, g, u_true)
    u = solve_complex_laplacian(grid, phi, rhs)
    np.testing.assert_allclose(u, u_true, atol=1e-8)


def test_solve_complex_laplacian_requires_mean_zero(t2):
    with pytest.raises(ValueError):
        solve_complex_laplacian(t2, np.zeros(t2.shape), np.ones(t2.shape))


def _koszul_fd(grid, phi, nu, eta, zeta, s=1e-4):
    def d(direction, a, b):
        return (calabi_inner(grid, phi + s * direction, a, b)
                - calabi_inner(grid, phi - s * direction, a, b)) / (2 * s)
    return 0.5 * (d(nu, eta, zeta) + d(eta, nu, zeta) - d(zeta, nu, eta))


def test_calabi_connection_koszul_oracle(t2, rng):
    phi = 0.3 * random_potential(t2, rng)
    nu = random_trig_field(t2, rng, max_mode=1, amplitude=0.01)
    eta = random_trig_field(t2, rng, max_mode=1, amplitude=0.01)
    conn = calabi_connection(t2, phi, nu, eta)
    for _ in range(3):
        zeta = random_trig_field(t2, rng, max_mode=2, amplitude=0.01)
        lhs = calabi_inner(t2, phi, conn, zeta)
        assert lhs == pytest.approx(_koszul_fd(t2, phi, nu, eta, zeta), rel=1e-6, abs=1e-14)


def test_calabi_connection_flat_sine_koszul(t2):
    x, y = t2.coordinates
    nu = 0.01 * np.sin(TWO_PI * x)
    zero = np.zeros(t2.shape)
    conn = calabi_connection(t2, zero, nu, nu)
    for zeta in (0.01 * np.cos(2 * TWO_PI * x), 0.01 * np.sin(2 * TWO_PI * x) * np.cos(TWO_PI * y)):
        assert calabi_inner(t2, zero, conn, zeta) == pytest.approx(
            _koszul_fd(t2, zero, nu, nu, zeta), rel=1e-6, abs=1e-14)


def test_calabi_connection_metric_compatibility(t2, rng):
    phi = 0.3 * random_potential(t2, rng)
    xi = random_trig_field(t2, rng, max_mode=1, amplitude=0.01)
    nu = random_trig_field(t2, rng, max_mode=2, amplitude=0.01)
    s = 1e-4
    fd = (calabi_inner(t2, phi + s * xi, nu, nu) - calabi_inner(t2, phi - s * xi, nu, nu)) / (2 * s)
    rhs = 2 * calabi_inner(t2, phi, calabi_connection(t2, phi, xi, nu), nu)
    assert fd == pytest.approx(rhs, rel=1e-6)


def test_calabi_connection_of_constants(t2):
    one = np.ones(t2.shape)
    assert np.max(np.abs(calabi_connection(t2, curved_potential(t2, 0.02), one, one))) < 1e-12


def test_second_fundamental_constant_direction(t2):
    one = np.ones(t2.shape)
    assert np.max(np.abs(second_fundamental_trace(t2, curved_potential(t2, 0.02), one, one))) < 1e-12


@pytest.mark.parametrize("grid", [torus_grid(1, 32), torus_grid(2, 8)], ids=str)
def test_second_fundamental_pairing(grid, rng):
    phi = random_potential(grid, rng)
    nu = random_trig_field(grid, rng, max_mode=1)
    r = second_fundamental_pairing(grid, phi, nu)
    assert r.passed and r.lhs < 0


@pytest.mark.parametrize("grid,amp,tol", [(torus_grid(1, 32), 0.005, 1e-10),
                                          (torus_grid(2, 12), 0.002, 1e-6)], ids=["n1", "n2"])
def test_second_fundamental_from_connection_difference(grid, amp, tol):
    # resolved data: the connection route converges spectrally
    x = grid.coordinates
    phi = curved_potential(grid, amp)
    nu = 0.1 * np.cos(TWO_PI * x[0]) + 0.05 * np.sin(TWO_PI * (x[1] + x[-1]))
    a = second_fundamental_trace(grid, phi, nu, nu)
    b = second_fundamental_from_connections(grid, phi, nu, nu)
    assert np.max(np.abs(a - b)) <= tol * np.max(np.abs(a))


def test_conformal_angle_values():
    assert conformal_angle(1) == 0.0
    assert conformal_angle(2) == pytest.approx(np.pi / 4, abs=1e-15)
    with pytest.raises(ValueError):
        conformal_angle(0)


def trig_basis(grid, max_mode=1):
    x = grid.coordinates
    ks = np.stack(np.meshgrid(*[np.arange(-max_mode, max_mode + 1)] * grid.real_dim, indexing="ij"),
                  axis=-1).reshape(-1, grid.real_dim)
    basis = []
    for k in ks:
        # keep one representative of each +-k pair
        nz = k[np.nonzero(k)[0]]
        if len(nz) and nz[0] < 0:
            continue
        arg = TWO_PI * sum(ki * xi for ki, xi in zip(k, x))
        basis.append(np.cos(arg))
        if len(nz):
            basis.append(np.sin(arg))
    return np.array(basis)


@pytest.mark.parametrize("grid", [torus_grid(1, 16), torus_grid(2, 6)], ids=str)
def test_angle_maximized_over_trig_basis(grid, rng):
    nu = random_trig_field(grid, rng, max_mode=1)
    h = nabla11(grid, nu)
    zero = np.zeros(grid.shape)
    r = angle_check(grid, zero, h, basis=trig_basis(grid))
    assert r.passed and r.details["attained"]
    assert r.details["alignment_with_trace"] == pytest.approx(1.0, abs=1e-10)
    assert r.details["angle"] == pytest.approx(conformal_angle(grid.n), abs=1e-6)


def test_angle_optimizer_matches_closed_form(t2, rng):
    # independent route: BFGS on the cosine over a small trig basis
    grid = torus_grid(1, 16)
    phi = 0.5 * random_potential(grid, rng)
    h = nabla11(grid, random_trig_field(grid, rng, max_mode=1))
    g = potential_to_metric(grid, phi)
    B = trig_basis(grid)
    norm_h = np.sqrt(ebin_inner(grid, g, h, h))

    def neg_cos(c):
        k = np.tensordot(c, B, axes=1)[..., None, None] * g
        return -ebin_inner(grid, g, h, k) / (norm_h * np.sqrt(ebin_inner(grid, g, k, k)))

    best = -minimize(neg_cos, rng.standard_normal(len(B)), method="BFGS", options={"gtol": 1e-12}).fun
    r = angle_check(grid, phi, h, basis=B)
    assert best == pytest.approx(r.lhs, abs=1e-6)
    assert r.lhs <= 1.0 + 1e-8


def test_angle_nodal_maximum(t4, rng):
    phi = random_potential(t4, rng)
    h = nabla11(t4, random_trig_field(t4, rng, max_mode=1))
    r = angle_check(t4, phi, h)
    assert r.lhs == pytest.approx(1 / np.sqrt(2), abs=1e-12)


def test_angle_rejects_zero(t2):
    with pytest.raises(ValueError):
        angle_check(t2, np.zeros(t2.shape), np.zeros(t2.shape + (2, 2)))


def test_dC_trivial_cases(t2, rng):
    phi = random_potential(t2, rng)
    assert dC_distance(t2, phi, phi) == 0.0
    assert dC_distance(t2, phi, phi + 5.0) == pytest.approx(0.0, abs=1e-7)


def test_dC_against_quadrature():
    # flat vs 0.05 sin(2 pi x1): dV = (1 - 0.1 pi^2 sin) dx
    grid = torus_grid(1, 256)
    x, _ = grid.coordinates
    a = 0.1 * np.pi**2
    cos_angle = quad(lambda s: np.sqrt(1 - a * np.sin(TWO_PI * s)), 0, 1, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    expected = 2 * np.arccos(cos_angle)
    got = dC_distance(grid, np.zeros(grid.shape), 0.05 * np.sin(TWO_PI * x))
    assert got == pytest.approx(expected, rel=1e-8)


def test_potential_from_volume_roundtrip(t2, rng):
    phi = random_potential(t2, rng)
    back = potential_from_volume(t2, volume_form(t2, phi))
    np.testing.assert_allclose(back, phi - phi.mean(), atol=1e-12)
    with pytest.raises(GridError):
        potential_from_volume(torus_grid(2, 4), volume_form(torus_grid(2, 4), np.zeros((4,) * 4)))


def test_calabi_lift_stays_in_kahler_metrics(t2, rng):
    phi1, phi2 = random_potential(t2, rng), random_potential(t2, rng)
    path = calabi_lift(t2, phi1, phi2, num=9)
    assert all(is_j_invariant(g) for g in path.metrics)
    np.testing.assert_allclose(path.metrics[0], potential_to_metric(t2, phi1), atol=1e-12)
    np.testing.assert_allclose(path.metrics[-1], potential_to_metric(t2, phi2), atol=1e-12)


def test_equivalence_chain_single_pair(t2, rng):
    r = equivalence_chain_check(t2, random_potential(t2, rng), random_potential(t2, rng))
    assert r.passed
    assert r.details["lift_length_vs_dC"] < 1e-8


def test_kahler_requires_torus():
    with pytest.raises(GridError):
        nabla11(sphere_grid(16), np.zeros(16))
