"""Spectral bases and collocation grids.

Torus fields are truncated Fourier series ``Σ c_mn e^{i(mx + ny)}`` over
``|m|, |n| <= K``, stored as a centered ``(2K+1, 2K+1)`` complex array.

Sphere fields are real orthonormal spherical-harmonic expansions up to degree
``L``; coefficient ``(l, m)`` sits at index ``l² + l + m``. Orders ``m > 0``
carry ``cos mφ``, orders ``m < 0`` carry ``sin |m|φ`` (associated Legendre
functions with the Condon-Shortley phase, as :func:`scipy.special.lpmv`).

Each basis has two grids:

* ``sample`` -- the Monte-Carlo evaluation and fit grid: ``(2K+2)²`` uniform
  nodes on the torus, ``(L+2) x (2L+4)`` Gauss-Legendre x uniform longitudes
  on the sphere;
* ``dense`` -- the quadrature grid used for products and norms, large enough
  that quadratic terms are resolved without aliasing.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Tuple

import attr
import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gammaln, lpmv

from ..errors import InputError
from ..geometry import SPHERE, TORUS, TWO_PI, Manifold


@attr.s(frozen=True, kw_only=True, eq=False, repr=False)
class Grid:
    manifold: Manifold = attr.ib()
    kind: str = attr.ib()
    shape: Tuple[int, int] = attr.ib()
    points: np.ndarray = attr.ib()
    weights: np.ndarray = attr.ib()
    # sphere only: colatitude / longitude of each node and the local frame
    theta: np.ndarray = attr.ib(default=None)
    phi: np.ndarray = attr.ib(default=None)
    e_theta: np.ndarray = attr.ib(default=None)
    e_phi: np.ndarray = attr.ib(default=None)

    def __repr__(self):
        return f'<Grid {self.manifold.name} {self.kind} {self.shape[0]}x{self.shape[1]}>'

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def matches(self, points, tol=1e-12) -> bool:
        points = np.asarray(points, dtype=float)
        if points.shape != self.points.shape:
            return False
        delta = self.manifold.difference(self.points, points)
        return bool(np.max(np.abs(delta), initial=0) <= tol)

    def integrate(self, values) -> np.ndarray:
        """Quadrature over the grid axis (axis 0)."""
        return np.tensordot(self.weights, np.asarray(values), axes=([0], [0]))


def _next_power_of_two(n):
    return 1 << (int(n) - 1).bit_length()


class TorusBasis:
    def __init__(self, K: int):
        if K < 0:
            raise InputError('Torus resolution K must be non-negative')
        self.K = K
        self.size = 2 * K + 1
        self.modes = np.arange(-K, K + 1)
        self.m = self.modes[:, None]
        self.n = self.modes[None, :]
        self.laplacian_eigenvalues = -(self.m ** 2 + self.n ** 2).astype(float)
        self.sample_n = 2 * K + 2
        self.dense_n = max(8, _next_power_of_two(3 * K + 2))

    def __repr__(self):
        return f'<TorusBasis K={self.K}>'

    @property
    def shape(self):
        return self.size, self.size

    def grid(self, kind='dense') -> Grid:
        return _torus_grid(self.K, kind)

    def synthesize(self, coeffs, n: int) -> np.ndarray:
        """Grid values, shape (..., n, n), axis -2 along x."""
        coeffs = np.asarray(coeffs)
        spectrum = np.zeros(coeffs.shape[:-2] + (n, n), dtype=complex)
        idx = self.modes % n
        spectrum[..., idx[:, None], idx[None, :]] = coeffs
        return np.real(np.fft.ifft2(spectrum) * n * n)

    def analyze(self, values) -> Tuple[np.ndarray, np.ndarray]:
        """Truncated Fourier coefficients and the RMS of the discarded content.

        Modes beyond K, including the Nyquist row and column of even grids,
        are dropped; the residual is reported per leading index.
        """
        values = np.asarray(values, dtype=float)
        n = values.shape[-1]
        if n < self.size:
            raise InputError(f'A {n}x{n} grid cannot resolve K={self.K}')
        spectrum = np.fft.fft2(values) / (n * n)
        idx = self.modes % n
        coeffs = spectrum[..., idx[:, None], idx[None, :]]
        total = np.sum(np.abs(spectrum) ** 2, axis=(-2, -1))
        kept = np.sum(np.abs(coeffs) ** 2, axis=(-2, -1))
        return coeffs, np.sqrt(np.maximum(total - kept, 0))

    def evaluate(self, coeffs, points) -> np.ndarray:
        """Pointwise synthesis at arbitrary points, shape (..., n_points)."""
        coeffs = np.asarray(coeffs)
        points = np.asarray(points, dtype=float)
        active = np.abs(coeffs) > 0
        rows = np.flatnonzero(active.any(axis=tuple(range(coeffs.ndim - 2)) + (-1,)))
        cols = np.flatnonzero(active.any(axis=tuple(range(coeffs.ndim - 2)) + (-2,)))
        if rows.size == 0:
            return np.zeros(coeffs.shape[:-2] + points.shape[:1])
        ex = np.exp(1j * points[:, 0:1] * self.modes[rows][None, :])
        ey = np.exp(1j * points[:, 1:2] * self.modes[cols][None, :])
        sub = coeffs[..., rows[:, None], cols[None, :]]
        return np.real(np.einsum('...mn,pm,pn->...p', sub, ex, ey))

    def dx(self, coeffs):
        return 1j * self.m * coeffs

    def dy(self, coeffs):
        return 1j * self.n * coeffs

    def hermitian_defect(self, coeffs) -> float:
        coeffs = np.asarray(coeffs)
        return float(np.max(np.abs(coeffs - np.conj(coeffs[..., ::-1, ::-1])), initial=0))

    def symmetrize(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=complex)
        return 0.5 * (coeffs + np.conj(coeffs[..., ::-1, ::-1]))


@lru_cache(maxsize=None)
def _torus_grid(K, kind) -> Grid:
    basis = torus_basis(K)
    n = {'sample': basis.sample_n, 'dense': basis.dense_n}[kind]
    axis = TWO_PI * np.arange(n) / n
    x, y = np.meshgrid(axis, axis, indexing='ij')
    points = np.stack([x.ravel(), y.ravel()], axis=-1)
    weights = np.full(n * n, (TWO_PI / n) ** 2)
    return Grid(manifold=TORUS, kind=kind, shape=(n, n), points=points, weights=weights)


def _normalization(l, m):
    m = abs(m)
    value = np.sqrt((2 * l + 1) / (4 * np.pi) * np.exp(gammaln(l - m + 1) - gammaln(l + m + 1)))
    return value * (np.sqrt(2) if m else 1.0)


class SphereBasis:
    def __init__(self, L: int):
        if L < 0:
            raise InputError('Sphere resolution L must be non-negative')
        self.L = L
        self.size = (L + 1) ** 2
        self.degrees, self.orders = degree_order(L)
        self.laplacian_eigenvalues = -(self.degrees * (self.degrees + 1)).astype(float)
        self.sample_shape = (L + 2, 2 * L + 4)
        self.dense_shape = (2 * L + 8, 4 * L + 16)

    def __repr__(self):
        return f'<SphereBasis L={self.L}>'

    @property
    def shape(self):
        return (self.size,)

    def grid(self, kind='dense') -> Grid:
        return _gauss_grid(*{'sample': self.sample_shape, 'dense': self.dense_shape}[kind], kind)

    def mean(self, coeffs):
        return np.asarray(coeffs)[..., 0] / np.sqrt(4 * np.pi)

    def synthesize(self, coeffs, grid: Grid, degree=None) -> np.ndarray:
        degree = self.L if degree is None else degree
        Y, _, _ = _sphere_matrices(degree, grid.shape, grid.kind)
        return np.einsum('pc,...c->...p', Y, np.asarray(coeffs))

    def analyze(self, values, grid: Grid, degree=None) -> np.ndarray:
        """Quadrature projection of scalar grid values (grid on the last axis)."""
        degree = self.L if degree is None else degree
        Y, _, _ = _sphere_matrices(degree, grid.shape, grid.kind)
        return np.einsum('pc,...p->...c', Y * grid.weights[:, None], np.asarray(values))

    def surface_gradient(self, coeffs, grid: Grid, degree=None) -> np.ndarray:
        """Cartesian surface gradient at grid nodes, shape (..., P, 3)."""
        degree = self.L if degree is None else degree
        _, Yt, Yp = _sphere_matrices(degree, grid.shape, grid.kind)
        coeffs = np.asarray(coeffs)
        ft = np.einsum('pc,...c->...p', Yt, coeffs)
        fp = np.einsum('pc,...c->...p', Yp, coeffs)
        return ft[..., None] * grid.e_theta + fp[..., None] * grid.e_phi

    def synthesize_tangent(self, data, grid: Grid) -> np.ndarray:
        """Cartesian values of rot ψ + ∇φ for data = (ψ, φ)."""
        _, Yt, Yp = _sphere_matrices(self.L, grid.shape, grid.kind)
        psi, phi = np.asarray(data)
        # x × e_θ = e_φ and x × e_φ = -e_θ
        v_theta = Yt @ phi - Yp @ psi
        v_phi = Yt @ psi + Yp @ phi
        return v_theta[:, None] * grid.e_theta + v_phi[:, None] * grid.e_phi

    def analyze_tangent(self, vectors, grid: Grid) -> np.ndarray:
        """Helmholtz pair (ψ, φ) of a tangent field sampled on a Gauss grid."""
        _, Yt, Yp = _sphere_matrices(self.L, grid.shape, grid.kind)
        vectors = np.asarray(vectors, dtype=float)
        v_theta = np.sum(vectors * grid.e_theta, axis=-1) * grid.weights
        v_phi = np.sum(vectors * grid.e_phi, axis=-1) * grid.weights
        scale = np.zeros(self.size)
        scale[1:] = 1 / (self.degrees[1:] * (self.degrees[1:] + 1))
        phi = (v_theta @ Yt + v_phi @ Yp) * scale
        psi = (v_phi @ Yt - v_theta @ Yp) * scale
        return np.stack([psi, phi])

    def evaluate(self, coeffs, points, degree=None) -> np.ndarray:
        degree = self.L if degree is None else degree
        return np.einsum('pc,...c->...p', cartesian_harmonics(points, degree), np.asarray(coeffs))


def degree_order(L):
    degrees = np.concatenate([np.full(2 * l + 1, l) for l in range(L + 1)])
    orders = np.concatenate([np.arange(-l, l + 1) for l in range(L + 1)])
    return degrees, orders


def harmonic_index(l, m):
    return l * l + l + m


@lru_cache(maxsize=None)
def _gauss_grid(nlat, nlon, kind) -> Grid:
    mu, w = leggauss(nlat)
    mu, w = mu[::-1], w[::-1]
    theta = np.arccos(mu)
    phi = TWO_PI * np.arange(nlon) / nlon
    T, P = np.meshgrid(theta, phi, indexing='ij')
    T, P = T.ravel(), P.ravel()
    st, ct, sp, cp = np.sin(T), np.cos(T), np.sin(P), np.cos(P)
    points = np.stack([st * cp, st * sp, ct], axis=-1)
    e_theta = np.stack([ct * cp, ct * sp, -st], axis=-1)
    e_phi = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)
    weights = np.repeat(w, nlon) * (TWO_PI / nlon)
    return Grid(manifold=SPHERE, kind=kind, shape=(nlat, nlon), points=points, weights=weights,
                theta=T, phi=P, e_theta=e_theta, e_phi=e_phi)


@lru_cache(maxsize=None)
def _sphere_matrices(degree, shape, kind):
    """Y, ∂θY and (1/sinθ)∂φY at the nodes of a Gauss grid."""
    grid = _gauss_grid(*shape, kind)
    mu = np.cos(grid.theta)
    sin_theta = np.sin(grid.theta)
    size = (degree + 1) ** 2
    Y = np.zeros((grid.size, size))
    Yt = np.zeros_like(Y)
    Yp = np.zeros_like(Y)
    for l in range(degree + 1):
        for m in range(l + 1):
            N = _normalization(l, m)
            P = lpmv(m, l, mu)
            if m == 0:
                dP = lpmv(1, l, mu)
            else:
                dP = 0.5 * (lpmv(m + 1, l, mu) - (l + m) * (l - m + 1) * lpmv(m - 1, l, mu))
            if m == 0:
                i = harmonic_index(l, 0)
                Y[:, i], Yt[:, i] = N * P, N * dP
                continue
            c, s = np.cos(m * grid.phi), np.sin(m * grid.phi)
            i, j = harmonic_index(l, m), harmonic_index(l, -m)
            Y[:, i], Yt[:, i], Yp[:, i] = N * P * c, N * dP * c, -m * N * P * s / sin_theta
            Y[:, j], Yt[:, j], Yp[:, j] = N * P * s, N * dP * s, m * N * P * c / sin_theta
    for a in (Y, Yt, Yp):
        a.setflags(write=False)
    return Y, Yt, Yp


def cartesian_harmonics(points, degree) -> np.ndarray:
    """Real spherical harmonics at arbitrary unit vectors, shape (n, (degree+1)²).

    Uses P_l^m(z) = (1 - z²)^{m/2} Q_l^m(z) with polynomial Q_l^m and
    (1 - z²)^{m/2} e^{imφ} = (x + iy)^m, so the poles need no special case.
    """
    points = np.asarray(points, dtype=float)
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    n = points.shape[0]
    out = np.empty((n, (degree + 1) ** 2))
    power = np.ones(n, dtype=complex)
    xy = x + 1j * y
    q_mm = np.ones(n)
    for m in range(degree + 1):
        if m:
            power = power * xy
            q_mm = -(2 * m - 1) * q_mm
        q_prev, q = None, q_mm
        for l in range(m, degree + 1):
            if l == m + 1:
                q_prev, q = q, (2 * m + 1) * z * q_mm
            elif l > m + 1:
                q_prev, q = q, ((2 * l - 1) * z * q - (l + m - 1) * q_prev) / (l - m)
            N = _normalization(l, m)
            if m == 0:
                out[:, harmonic_index(l, 0)] = N * q
            else:
                out[:, harmonic_index(l, m)] = N * q * power.real
                out[:, harmonic_index(l, -m)] = N * q * power.imag
    return out


@lru_cache(maxsize=None)
def torus_basis(K: int) -> TorusBasis:
    return TorusBasis(K)


@lru_cache(maxsize=None)
def sphere_basis(L: int) -> SphereBasis:
    return SphereBasis(L)


def basis_for(manifold: Manifold, resolution: int):
    if manifold is TORUS:
        return torus_basis(int(resolution))
    if manifold is SPHERE:
        return sphere_basis(int(resolution))
    raise InputError(f'No spectral basis for {manifold!r}')


def default_resolution(manifold: Manifold) -> int:
    return 16 if manifold is TORUS else 15


def sample_grid(manifold: Manifold, resolution: int) -> Grid:
    return basis_for(manifold, resolution).grid('sample')


def dense_grid(manifold: Manifold, resolution: int) -> Grid:
    return basis_for(manifold, resolution).grid('dense')

