"""
Discretized model manifolds and the pointwise real/complex dictionary.

Three base manifolds are supported:

``torus-2d``
    The flat torus R^2/Z^2 viewed as a complex curve (n = 1), with
    coordinate z = x1 + i x2.
``torus-4d``
    The flat torus R^4/Z^4 viewed as a complex surface (n = 2), with
    z1 = x1 + i x3 and z2 = x2 + i x4.
``sphere-axisym``
    The round unit 2-sphere restricted to functions of the colatitude only
    (n = 1); nodes are cell centres theta_i = (i + 1/2) pi / N.

On tori the reference Kahler metric is the standard flat metric, i.e. the
Riemannian matrix is the identity and g_{i jbar} = delta / 2, with total
volume V = 1.  Derivatives are trigonometric (FFT); the Nyquist mode is
discarded in every derivative so that all second-derivative symbols are
products of one symmetric first-derivative symbol.

Scalar fields are plain arrays of shape ``grid.shape``; symmetric tensor
fields carry two trailing axes of size ``2n`` (torus) or 2 (sphere).

Laplacian convention used everywhere in the package: the complex
Laplacian ``laplacian(f) = 1/2 tr(g^{-1} nabla^{1,1} f)``, which on flat
tori is half of the Euclidean Laplacian and on the sphere is half of the
Laplace-Beltrami operator.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_banded

TOPOLOGIES = ("torus-2d", "torus-4d", "sphere-axisym")
CONVENTION_VERSION = 1


class GridError(ValueError):
    """Raised for grid mismatches and unsupported operations."""


class SingularMetricError(ValueError):
    """Raised when a metric field is singular or indefinite at some node."""


class GridSpec:
    """A model base manifold sampled on a tensor or colatitude grid.

    Parameters
    ----------
    topology : {"torus-2d", "torus-4d", "sphere-axisym"}
    resolution : int
        Nodes per axis (tori) or number of colatitude cells (sphere).
    """

    def __init__(self, topology: str, resolution: int):
        if topology not in TOPOLOGIES:
            raise GridError(f"unknown topology {topology!r}; expected one of {TOPOLOGIES}")
        resolution = int(resolution)
        if resolution < 4:
            raise GridError(f"resolution must be at least 4, got {resolution}")
        if topology != "sphere-axisym" and resolution % 2:
            raise GridError("torus resolution must be even")
        self.topology = topology
        self.resolution = resolution

    def __repr__(self) -> str:
        return f"GridSpec({self.topology!r}, {self.resolution})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, GridSpec)
            and self.topology == other.topology
            and self.resolution == other.resolution
        )

    def __hash__(self) -> int:
        return hash((self.topology, self.resolution))

    # -- basic geometry -------------------------------------------------

    @property
    def is_torus(self) -> bool:
        return self.topology.startswith("torus")

    @property
    def n(self) -> int:
        """Complex dimension."""
        return 2 if self.topology == "torus-4d" else 1

    @property
    def real_dim(self) -> int:
        return 2 * self.n

    @property
    def shape(self) -> tuple[int, ...]:
        if self.topology == "sphere-axisym":
            return (self.resolution,)
        return (self.resolution,) * self.real_dim

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Per-node coordinates, one array of ``shape`` per axis."""
        N = self.resolution
        if self.topology == "sphere-axisym":
            return ((np.arange(N) + 0.5) * np.pi / N,)
        x = np.arange(N) / N
        return tuple(np.meshgrid(*([x] * self.real_dim), indexing="ij"))

    @cached_property
    def theta_faces(self) -> np.ndarray:
        if self.topology != "sphere-axisym":
            raise GridError("theta_faces is only defined on the sphere")
        return np.arange(self.resolution + 1) * np.pi / self.resolution

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights for the reference volume form mu_0.

        Tori: equal weights summing to 1.  Sphere: exact areas of the
        colatitude bands, 2 pi (cos theta_{i-1/2} - cos theta_{i+1/2}),
        summing to 4 pi.
        """
        if self.topology == "sphere-axisym":
            c = np.cos(self.theta_faces)
            return 2 * np.pi * (c[:-1] - c[1:])
        return np.full(self.shape, 1.0 / self.size)

    @property
    def volume(self) -> float:
        """Total reference volume V."""
        return 4 * np.pi if self.topology == "sphere-axisym" else 1.0

    @cached_property
    def coordinate_density(self) -> np.ndarray:
        """sqrt(det) of the reference metric in the stored coordinates."""
        if self.topology == "sphere-axisym":
            return np.sin(self.coordinates[0])
        return np.ones(self.shape)

    def reference_metric(self) -> np.ndarray:
        """The reference Riemannian metric as a tensor field."""
        if self.topology == "sphere-axisym":
            g = np.zeros(self.shape + (2, 2))
            g[..., 0, 0] = 1.0
            g[..., 1, 1] = np.sin(self.coordinates[0]) ** 2
            return g
        return np.broadcast_to(np.eye(self.real_dim), self.shape + (self.real_dim,) * 2).copy()

    # -- quadrature -----------------------------------------------------

    def integrate(self, f, ratio=None) -> float:
        """Integrate ``f`` against ``ratio * mu_0`` (``mu_0`` if omitted)."""
        f = np.asarray(f, dtype=float)
        self.check_scalar(f)
        if ratio is None:
            return float(np.sum(self.weights * f))
        return float(np.sum(self.weights * ratio * f))

    def mean(self, f, ratio=None) -> float:
        if ratio is None:
            return self.integrate(f) / self.volume
        return self.integrate(f, ratio) / self.integrate(np.ones(self.shape), ratio)

    def check_scalar(self, f) -> None:
        if np.shape(f) != self.shape:
            raise GridError(f"field of shape {np.shape(f)} does not live on {self!r}")

    def check_tensor(self, h) -> None:
        d = 2 if self.topology == "sphere-axisym" else self.real_dim
        if np.shape(h) != self.shape + (d, d):
            raise GridError(f"tensor of shape {np.shape(h)} does not live on {self!r}")

    # -- spectral calculus on tori --------------------------------------

    @cached_property
    def _wavenumbers(self) -> tuple[np.ndarray, ...]:
        N = self.resolution
        k = 2 * np.pi * np.fft.fftfreq(N, d=1.0 / N)
        k[N // 2] = 0.0
        ks = []
        for axis in range(self.real_dim):
            shape = [1] * self.real_dim
            shape[axis] = N
            ks.append(k.reshape(shape))
        return tuple(ks)

    def _require_torus(self, what: str) -> None:
        if not self.is_torus:
            raise GridError(f"{what} is only available on torus grids")

    def gradient(self, f) -> np.ndarray:
        """Spectral gradient, shape ``shape + (2n,)``."""
        self._require_torus("gradient")
        self.check_scalar(f)
        fh = np.fft.fftn(f)
        return np.stack([np.fft.ifftn(1j * k * fh).real for k in self._wavenumbers], axis=-1)

    def hessian(self, f) -> np.ndarray:
        """Spectral real Hessian d^2 f / dx^i dx^j, shape ``shape + (2n, 2n)``."""
        self._require_torus("hessian")
        self.check_scalar(f)
        d = self.real_dim
        fh = np.fft.fftn(f)
        ks = self._wavenumbers
        H = np.empty(self.shape + (d, d))
        for a in range(d):
            for b in range(a, d):
                H[..., a, b] = np.fft.ifftn(-ks[a] * ks[b] * fh).real
                H[..., b, a] = H[..., a, b]
        return H

    def project_resolved(self, f) -> np.ndarray:
        """Remove Fourier modes on which every derivative vanishes (except the mean).

        These are the modes built only from zero and Nyquist frequencies.
        """
        self._require_torus("project_resolved")
        null = self._laplacian_symbol == 0
        null.flat[0] = False
        fh = np.fft.fftn(f)
        fh[null] = 0.0
        return np.fft.ifftn(fh).real

    @cached_property
    def _laplacian_symbol(self) -> np.ndarray:
        if self.is_torus:
            return -0.5 * sum(k**2 for k in self._wavenumbers)
        raise GridError("no spectral symbol on the sphere")

    # -- sphere finite volumes -----------------------------------------

    @cached_property
    def _face_conductance(self) -> np.ndarray:
        # sin(theta_face) / sin(h) makes cos(theta) an exact eigenfunction
        # (eigenvalue -2 of Laplace-Beltrami); faces at the poles carry zero
        # flux, which is the even ghost extension.
        h = np.pi / self.resolution
        return np.sin(self.theta_faces) / np.sin(h)

    @cached_property
    def _band_areas(self) -> np.ndarray:
        return self.weights / (2 * np.pi)

    def _sphere_flux_divergence(self, f) -> np.ndarray:
        s = self._face_conductance
        df = np.diff(f)
        flux = np.zeros(self.resolution + 1)
        flux[1:-1] = s[1:-1] * df
        return (flux[1:] - flux[:-1]) / self._band_areas

    # -- Laplacian ------------------------------------------------------

    def laplacian(self, f) -> np.ndarray:
        """Reference complex Laplacian (half the Riemannian Laplacian)."""
        f = np.asarray(f, dtype=float)
        self.check_scalar(f)
        if self.is_torus:
            return np.fft.ifftn(self._laplacian_symbol * np.fft.fftn(f)).real
        return 0.5 * self._sphere_flux_divergence(f)

    def laplacian_matrix_banded(self) -> np.ndarray:
        """Sphere Laplacian as a (3, N) banded matrix for ``solve_banded``."""
        if self.is_torus:
            raise GridError("banded form is only available on the sphere")
        s = self._face_conductance[1:-1]
        A = self._band_areas
        ab = np.zeros((3, self.resolution))
        ab[0, 1:] = 0.5 * s / A[:-1]
        ab[2, :-1] = 0.5 * s / A[1:]
        diag = np.zeros(self.resolution)
        diag[:-1] -= s
        diag[1:] -= s
        ab[1] = 0.5 * diag / A
        return ab

    def solve_laplacian(self, f, ratio=None) -> np.ndarray:
        """Inverse reference Laplacian on mean-zero data.

        ``f`` is projected to mean zero (w.r.t. mu_0) before inversion and
        the result is returned with zero mean w.r.t. ``ratio * mu_0``
        (``mu_0`` if omitted).
        """
        f = np.asarray(f, dtype=float)
        self.check_scalar(f)
        f = f - self.mean(f)
        if self.is_torus:
            # zero symbols: the constant mode and modes built only from
            # discarded Nyquist frequencies, which lie outside the range
            sym = self._laplacian_symbol
            null = sym == 0
            uh = np.fft.fftn(f) / np.where(null, 1.0, sym)
            uh[null] = 0.0
            u = np.fft.ifftn(uh).real
        else:
            # pin u_0 = 0 to remove the constant null space
            ab = self.laplacian_matrix_banded()
            sub = ab[:, 1:].copy()
            sub[0, 0] = 0.0
            u = np.zeros(self.resolution)
            u[1:] = solve_banded((1, 1), sub, f[1:])
        return u - self.mean(u, ratio)


def torus_grid(n: int, resolution: int) -> GridSpec:
    """Flat torus of complex dimension ``n`` in {1, 2}."""
    if n not in (1, 2):
        raise GridError("only complex dimension 1 or 2 is supported")
    return GridSpec("torus-2d" if n == 1 else "torus-4d", resolution)


def sphere_grid(resolution: int) -> GridSpec:
    return GridSpec("sphere-axisym", resolution)


def check_same_grid(*grids: GridSpec) -> GridSpec:
    first = grids[0]
    for g in grids[1:]:
        if g != first:
            raise GridError(f"grid mismatch: {first!r} vs {g!r}")
    return first


# ---------------------------------------------------------------------------
# Densities


@dataclass(frozen=True, eq=False)
class Density:
    """A nonnegative top-degree form ``ratio * mu_0`` on ``grid``.

    ``mu_0`` is the reference volume form whose quadrature weights are
    ``grid.weights``.  Zeros are allowed (boundary points of the completion).
    """

    grid: GridSpec
    ratio: np.ndarray

    def __post_init__(self):
        ratio = np.asarray(self.ratio, dtype=float)
        self.grid.check_scalar(ratio)
        if not np.all(np.isfinite(ratio)):
            raise ValueError("density ratio must be finite")
        if np.any(ratio < 0):
            raise ValueError(f"negative density: min ratio {ratio.min():.3e}")
        ratio.setflags(write=False)
        object.__setattr__(self, "ratio", ratio)

    @cached_property
    def total(self) -> float:
        return self.grid.integrate(self.ratio)

    def normalized(self, mass: float | None = None) -> "Density":
        """Rescale to total mass ``mass`` (default: the grid volume V)."""
        mass = self.grid.volume if mass is None else mass
        return Density(self.grid, self.ratio * (mass / self.total))

    @property
    def is_positive(self) -> bool:
        return bool(np.all(self.ratio > 0))

    def __repr__(self) -> str:
        return f"Density({self.grid!r}, total={self.total:.6g})"


def reference_density(grid: GridSpec) -> Density:
    return Density(grid, np.ones(grid.shape))


# ---------------------------------------------------------------------------
# Pointwise matrix algebra


def _invert_solve(g, h):
    try:
        return np.linalg.solve(g, h)
    except np.linalg.LinAlgError as exc:
        raise SingularMetricError("metric is singular at some node") from exc


def pointwise_trace_pair(g, h, k) -> np.ndarray:
    """tr(g^{-1} h g^{-1} k) at every node."""
    X = _invert_solve(g, h)
    Y = X if k is h else _invert_solve(g, k)
    return np.einsum("...ij,...ji->...", X, Y)


def pointwise_trace(g, h) -> np.ndarray:
    """tr(g^{-1} h) at every node."""
    return np.trace(_invert_solve(g, h), axis1=-2, axis2=-1)


def riemannian_volume(grid: GridSpec, g) -> Density:
    """dV_g = sqrt(det g) dx, expressed relative to mu_0."""
    grid.check_tensor(g)
    det = np.linalg.det(g)
    if np.any(det <= 0):
        i = tuple(int(j) for j in np.unravel_index(np.argmin(det), grid.shape))
        raise SingularMetricError(f"metric not positive definite at node {i} (det={det[i]:.3e})")
    return Density(grid, np.sqrt(det) / grid.coordinate_density)


def min_eigenvalue(g) -> np.ndarray:
    return np.linalg.eigvalsh(g)[..., 0]


# ---------------------------------------------------------------------------
# Real/complex dictionary


def complex_structure(n: int) -> np.ndarray:
    """The matrix P with J.h = P h P^T in coordinates (x_1..x_n, y_1..y_n)."""
    I = np.eye(n)
    Z = np.zeros((n, n))
    return np.block([[Z, -I], [I, Z]])


def j_action(h) -> np.ndarray:
    """J.h := h(J., J.) for a symmetric tensor field."""
    n = h.shape[-1] // 2
    P = complex_structure(n)
    return P @ h @ P.T


def project_11(h) -> np.ndarray:
    """Projection of a symmetric tensor onto its J-invariant part."""
    return 0.5 * (h + j_action(h))


def is_j_invariant(h, tol: float = 1e-10) -> bool:
    scale = max(float(np.max(np.abs(h))), 1.0)
    return bool(np.max(np.abs(h - j_action(h))) <= tol * scale)


def hermitian_to_real(G, tol: float = 1e-12) -> np.ndarray:
    """Real 2n x 2n matrix of a Hermitian n x n field [g_{i jbar}].

    Block form ``[[G + conj G, (G - G^T)/i], [(G^T - G)/i, G + conj G]]``.
    """
    G = np.asarray(G, dtype=complex)
    GT = np.swapaxes(G, -1, -2)
    scale = max(float(np.max(np.abs(G))), 1.0)
    if np.max(np.abs(G - GT.conj())) > tol * scale:
        raise ValueError("input is not Hermitian")
    top = np.concatenate([(G + G.conj()).real, ((G - GT) / 1j).real], axis=-1)
    bottom = np.concatenate([((GT - G) / 1j).real, (G + G.conj()).real], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def real_to_hermitian(g) -> np.ndarray:
    """Inverse of :func:`hermitian_to_real` on J-invariant tensors.

    g_{i jbar} = g_{ij}/2 + (i/2) g_{i, j+n}.
    """
    g = np.asarray(g, dtype=float)
    n = g.shape[-1] // 2
    return 0.5 * g[..., :n, :n] + 0.5j * g[..., :n, n:]


def real_hessian(grid: GridSpec, f) -> np.ndarray:
    return grid.hessian(np.asarray(f, dtype=float))


def complex_hessian(grid: GridSpec, f) -> np.ndarray:
    """[f_{i jbar}] = (A + C)/4 + i (B^T - B)/4 from the real Hessian blocks."""
    H = grid.hessian(np.asarray(f, dtype=float))
    n = grid.n
    A = H[..., :n, :n]
    B = H[..., n:, :n]
    C = H[..., n:, n:]
    BT = np.swapaxes(B, -1, -2)
    return 0.25 * (A + C) + 0.25j * (BT - B)


# ---------------------------------------------------------------------------
# Test fields


def random_trig_field(grid: GridSpec, rng: np.random.Generator, max_mode: int = 2,
                      amplitude: float = 1.0, mean_zero: bool = True) -> np.ndarray:
    """Random real trigonometric polynomial with modes |k|_inf <= max_mode.

    The result is scaled to sup norm ``amplitude``.
    """
    grid._require_torus("random_trig_field")
    d = grid.real_dim
    N = grid.resolution
    if 2 * max_mode >= N:
        raise GridError("max_mode must stay below the Nyquist frequency")
    modes = np.arange(-max_mode, max_mode + 1)
    coef = np.zeros(grid.shape, dtype=complex)
    idx = np.meshgrid(*([modes] * d), indexing="ij")
    vals = rng.standard_normal(idx[0].shape) + 1j * rng.standard_normal(idx[0].shape)
    coef[tuple(i % N for i in idx)] = vals
    f = np.fft.ifftn(coef).real
    if mean_zero:
        f -= f.mean()
    return amplitude * f / np.max(np.abs(f))


def legendre_mode(grid: GridSpec, degree: int) -> np.ndarray:
    """Axisymmetric spherical harmonic P_l(cos theta) on the sphere grid."""
    if grid.topology != "sphere-axisym":
        raise GridError("legendre_mode needs the sphere grid")
    c = np.zeros(degree + 1)
    c[degree] = 1.0
    return np.polynomial.legendre.legval(np.cos(grid.coordinates[0]), c)
