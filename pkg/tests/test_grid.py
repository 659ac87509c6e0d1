import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kahlerlab.grid import (
    Density,
    GridError,
    GridSpec,
    SingularMetricError,
    complex_hessian,
    hermitian_to_real,
    is_j_invariant,
    j_action,
    legendre_mode,
    pointwise_trace,
    pointwise_trace_pair,
    project_11,
    random_trig_field,
    real_to_hermitian,
    riemannian_volume,
    sphere_grid,
    torus_grid,
)

TWO_PI = 2 * np.pi


def test_rejects_bad_specs():
    with pytest.raises(GridError):
        GridSpec("klein-bottle", 16)
    with pytest.raises(GridError):
        GridSpec("torus-2d", 15)
    with pytest.raises(GridError):
        torus_grid(3, 8)


def test_reference_volumes(t2, t4, s2):
    assert t2.volume == 1.0
    assert np.sum(t4.weights) == pytest.approx(1.0, abs=1e-14)
    assert np.sum(s2.weights) == pytest.approx(4 * np.pi, rel=1e-14)


def test_hessian_of_trig_monomial(t2):
    # oracle: analytic second derivatives of sin(2 pi x) cos(4 pi y)
    x, y = t2.coordinates
    f = np.sin(TWO_PI * x) * np.cos(2 * TWO_PI * y)
    H = t2.hessian(f)
    fxx = -(TWO_PI**2) * f
    fyy = -4 * TWO_PI**2 * f
    fxy = -2 * TWO_PI**2 * np.cos(TWO_PI * x) * np.sin(2 * TWO_PI * y)
    np.testing.assert_allclose(H[..., 0, 0], fxx, atol=1e-9)
    np.testing.assert_allclose(H[..., 1, 1], fyy, atol=1e-9)
    np.testing.assert_allclose(H[..., 0, 1], fxy, atol=1e-9)
    np.testing.assert_allclose(H[..., 1, 0], fxy, atol=1e-9)


def test_hessian_against_finite_differences():
    # independent route: sixth-order central differences on a fine grid
    grid = torus_grid(1, 128)
    x, y = grid.coordinates
    f = np.exp(0.3 * np.sin(TWO_PI * x) + 0.2 * np.cos(TWO_PI * (x + y)))
    h = 1.0 / grid.resolution
    c = np.array([1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90])
    fxx = sum(cj * np.roll(f, 3 - j, axis=0) for j, cj in enumerate(c)) / h**2
    np.testing.assert_allclose(grid.hessian(f)[..., 0, 0], fxx, atol=1e-5 * np.max(np.abs(fxx)))


def test_laplacian_is_half_riemannian(t2):
    x, y = t2.coordinates
    f = np.cos(TWO_PI * x) + np.sin(2 * TWO_PI * y)
    expected = -0.5 * (TWO_PI**2 * np.cos(TWO_PI * x) + 4 * TWO_PI**2 * np.sin(2 * TWO_PI * y))
    np.testing.assert_allclose(t2.laplacian(f), expected, atol=1e-9)


def test_solve_laplacian_inverts_on_mean_zero(t4, rng):
    f = random_trig_field(t4, rng, max_mode=2)
    u = t4.solve_laplacian(t4.laplacian(f))
    np.testing.assert_allclose(u, f - f.mean(), atol=1e-12)


def test_sphere_first_harmonic_is_exact_eigenfunction(s2):
    # cos(theta) is an eigenfunction of the half Laplace-Beltrami with eigenvalue -1
    f = np.cos(s2.coordinates[0])
    np.testing.assert_allclose(s2.laplacian(f), -f, atol=1e-12)


def test_sphere_second_harmonic_second_order():
    errs = []
    for N in (64, 128):
        grid = sphere_grid(N)
        p2 = legendre_mode(grid, 2)
        errs.append(np.max(np.abs(grid.laplacian(p2) + 3 * p2)))
    assert errs[1] < errs[0] / 3.5


def test_sphere_laplacian_conserves_mass(s2):
    f = legendre_mode(s2, 3) + np.cos(s2.coordinates[0]) ** 4
    assert abs(s2.integrate(s2.laplacian(f))) < 1e-12


def test_sphere_solve_roundtrip(s2):
    f = legendre_mode(s2, 2) + 0.3 * legendre_mode(s2, 5)
    u = s2.solve_laplacian(s2.laplacian(f))
    np.testing.assert_allclose(u, f - s2.mean(f), atol=1e-10)


def test_hermitian_dictionary_roundtrip(rng):
    n = 2
    A = rng.standard_normal((5, n, n)) + 1j * rng.standard_normal((5, n, n))
    G = A @ np.swapaxes(A.conj(), -1, -2) + np.eye(n)
    g = hermitian_to_real(G)
    assert is_j_invariant(g)
    np.testing.assert_allclose(hermitian_to_real(real_to_hermitian(g)), g, atol=1e-12)
    # det g = 2^{2n} |det G|^2
    np.testing.assert_allclose(np.linalg.det(g), 2 ** (2 * n) * np.abs(np.linalg.det(G)) ** 2, rtol=1e-10)


def test_hermitian_to_real_rejects_non_hermitian():
    with pytest.raises(ValueError):
        hermitian_to_real(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_complex_hessian_of_plurisubharmonic(t2):
    # |z|^2-like periodic field: f = cos(2 pi x); f_{z zbar} = f_xx / 4
    x, _ = t2.coordinates
    f = np.cos(TWO_PI * x)
    G = complex_hessian(t2, f)
    np.testing.assert_allclose(G[..., 0, 0].real, -(TWO_PI**2) * f / 4, atol=1e-10)
    np.testing.assert_allclose(G[..., 0, 0].imag, 0.0, atol=1e-12)


def test_real_dictionary_matches_projection(t4, rng):
    f = random_trig_field(t4, rng, max_mode=1)
    G = complex_hessian(t4, f)
    np.testing.assert_allclose(hermitian_to_real(G), project_11(t4.hessian(f)), atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.sampled_from([1, 2]))
def test_projection_is_idempotent_and_j_invariant(seed, n):
    r = np.random.default_rng(seed)
    d = 2 * n
    h = r.standard_normal((4, d, d))
    h = h + np.swapaxes(h, -1, -2)
    p = project_11(h)
    np.testing.assert_allclose(project_11(p), p, atol=1e-14)
    np.testing.assert_allclose(j_action(p), p, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_trace_pair_symmetric_and_positive(seed):
    r = np.random.default_rng(seed)
    a = r.standard_normal((3, 4, 4))
    g = a @ np.swapaxes(a, -1, -2) + 0.5 * np.eye(4)
    h = r.standard_normal((3, 4, 4))
    h = h + np.swapaxes(h, -1, -2)
    k = r.standard_normal((3, 4, 4))
    k = k + np.swapaxes(k, -1, -2)
    np.testing.assert_allclose(pointwise_trace_pair(g, h, k), pointwise_trace_pair(g, k, h), rtol=1e-9, atol=1e-9)
    assert np.all(pointwise_trace_pair(g, h, h) > 0)
    np.testing.assert_allclose(pointwise_trace(g, g), 4.0, rtol=1e-12)


def test_riemannian_volume_of_reference(t2, s2):
    assert riemannian_volume(t2, t2.reference_metric()).total == pytest.approx(1.0, rel=1e-14)
    assert riemannian_volume(s2, s2.reference_metric()).total == pytest.approx(4 * np.pi, rel=1e-14)


def test_riemannian_volume_rejects_indefinite(t2):
    g = t2.reference_metric()
    g[3, 5] = np.diag([1.0, -1.0])
    with pytest.raises(SingularMetricError, match=r"\(3, 5\)"):
        riemannian_volume(t2, g)


def test_density_validation(t2):
    with pytest.raises(ValueError):
        Density(t2, -np.ones(t2.shape))
    with pytest.raises(GridError):
        Density(t2, np.ones(5))
    mu = Density(t2, 3 * np.ones(t2.shape))
    assert mu.normalized().total == pytest.approx(1.0)
    with pytest.raises(ValueError):
        mu.ratio[0, 0] = 1.0


def test_grid_mismatch_is_detected(t2):
    f = np.ones(torus_grid(1, 16).shape)
    with pytest.raises(GridError):
        t2.integrate(f)


def test_random_trig_field_below_nyquist(rng):
    with pytest.raises(GridError):
        random_trig_field(torus_grid(1, 8), rng, max_mode=4)
