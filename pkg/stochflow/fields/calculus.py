"""Differential operators on spectral fields.

Linear operators act diagonally on coefficients. Products (covariant
derivatives, the advective term of the pressure equation, Sobolev integrands)
are formed on the dense grid of the basis and projected back, which resolves
every quadratic term of band-limited inputs exactly.
"""

from __future__ import annotations

import logging
from typing import Iterable, Optional, Tuple

import numpy as np

from ..errors import InputError
from ..geometry import SPHERE, TORUS, Point, TangentVector, get_manifold
from .specs import ZERO_MEAN_TOLERANCE, ScalarFieldSpec, VectorFieldSpec
from .spectral import default_resolution, sample_grid, sphere_basis, torus_basis

log = logging.getLogger('fields.calculus')

DIVERGENCE_FREE_TOLERANCE = 1e-8


def _scalar(like, coeffs) -> ScalarFieldSpec:
    return ScalarFieldSpec(manifold=like.manifold, resolution=like.resolution, coeffs=coeffs)


def _vector(like, data) -> VectorFieldSpec:
    return VectorFieldSpec(manifold=like.manifold, resolution=like.resolution, data=data)


def laplacian(f: ScalarFieldSpec) -> ScalarFieldSpec:
    return _scalar(f, f.coeffs * f.basis.laplacian_eigenvalues)


def grad(f: ScalarFieldSpec) -> VectorFieldSpec:
    b = f.basis
    if f.is_torus:
        return _vector(f, np.stack([b.dx(f.coeffs), b.dy(f.coeffs)]))
    return _vector(f, np.stack([np.zeros_like(f.coeffs), f.coeffs]))


def rot(psi: ScalarFieldSpec) -> VectorFieldSpec:
    """x × ∇ψ on the sphere; the quarter-turned gradient (-∂yψ, ∂xψ) on the torus."""
    b = psi.basis
    if psi.is_torus:
        return _vector(psi, np.stack([-b.dy(psi.coeffs), b.dx(psi.coeffs)]))
    return _vector(psi, np.stack([psi.coeffs, np.zeros_like(psi.coeffs)]))


def div(v: VectorFieldSpec) -> ScalarFieldSpec:
    b = v.basis
    if v.is_torus:
        return _scalar(v, b.dx(v.data[0]) + b.dy(v.data[1]))
    return _scalar(v, v.data[1] * b.laplacian_eigenvalues)


def mean(f: ScalarFieldSpec) -> float:
    return f.mean


def laplace_inverse(f: ScalarFieldSpec) -> ScalarFieldSpec:
    """Zero-mean solution of Δu = f; a non-zero mean of f is removed with a warning."""
    m = f.mean
    if abs(m) > ZERO_MEAN_TOLERANCE:
        log.warning(f'Inverse Laplacian input has mean {m:.3e}; subtracting it')
    eig = f.basis.laplacian_eigenvalues
    with np.errstate(divide='ignore', invalid='ignore'):
        inverse = np.where(eig == 0, 0.0, 1 / np.where(eig == 0, 1.0, eig))
    return _scalar(f, f.coeffs * inverse)


def leray_project(v: VectorFieldSpec) -> VectorFieldSpec:
    """v - ∇Δ⁻¹ div v."""
    if v.is_torus:
        return v - grad(laplace_inverse(div(v)))
    return _vector(v, np.stack([v.data[0], np.zeros_like(v.data[1])]))


def gradient_part(v: VectorFieldSpec) -> VectorFieldSpec:
    return v - leray_project(v)


def ricci_sharp_field(v: VectorFieldSpec) -> VectorFieldSpec:
    return v * v.manifold.curvature


def bochner_laplacian(v: VectorFieldSpec) -> VectorFieldSpec:
    """Trace of ∇²; on the sphere Δ(rot ψ + ∇φ) = rot((Δ+1)ψ) + ∇((Δ+1)φ)."""
    shift = v.manifold.curvature
    return _vector(v, v.data * (v.basis.laplacian_eigenvalues + shift))


def hodge_laplacian(v: VectorFieldSpec) -> VectorFieldSpec:
    """-□ = Δ - Ric♯, acting on both Helmholtz potentials by their eigenvalues."""
    return _vector(v, v.data * v.basis.laplacian_eigenvalues)


def _torus_dense(v: VectorFieldSpec):
    n = v.basis.dense_n
    values = v.basis.synthesize(v.data, n)
    jac = v.basis.synthesize(v._torus_jacobian_coeffs, n)
    return n, values, jac


def _sphere_dense_jacobian(v: VectorFieldSpec, grid):
    """Π G at the dense-grid nodes, shape (P, 3, 3)."""
    _, grad_coeffs = v._cartesian
    G = np.moveaxis(v.basis.synthesize(grad_coeffs, grid, degree=v.resolution + 2), -1, 0)
    x = grid.points
    return G - x[:, :, None] * np.einsum('pc,pcj->pj', x, G)[:, None, :]


def covariant_derivative_field(v: VectorFieldSpec, w: VectorFieldSpec) -> VectorFieldSpec:
    """∇_w v, truncated to the common resolution."""
    if v.manifold is not w.manifold or v.resolution != w.resolution:
        raise InputError('Covariant derivative needs fields of one space')
    basis = v.basis
    if v.is_torus:
        n, _, jac = _torus_dense(v)
        wv = basis.synthesize(w.data, n)
        product = np.einsum('ijab,jab->iab', jac, wv)
        coeffs, _ = basis.analyze(product)
        return _vector(v, basis.symmetrize(coeffs))
    grid = basis.grid('dense')
    product = np.einsum('pij,pj->pi', _sphere_dense_jacobian(v, grid), w.grid_values(grid))
    return _vector(v, basis.analyze_tangent(product, grid))


def advective_divergence(v: VectorFieldSpec, w: VectorFieldSpec) -> ScalarFieldSpec:
    """div(∇_v w)."""
    return div(covariant_derivative_field(w, v))


def pressure_force(v: VectorFieldSpec, nu: float, hodge: bool = False) -> VectorFieldSpec:
    """∇Δ⁻¹(div ∇_v v - ν div Ric♯v) for divergence-free v.

    ``hodge`` mirrors the caller's viscosity mode and does not change the result.
    """
    defect = scalar_l2_norm(div(v))
    if defect > DIVERGENCE_FREE_TOLERANCE:
        raise InputError(f'Pressure force needs a divergence-free field, |div v| = {defect:.3e}')
    source = advective_divergence(v, v) - nu * div(ricci_sharp_field(v))
    return grad(laplace_inverse(source))


def scalar_l2_norm(f: ScalarFieldSpec) -> float:
    if f.is_torus:
        return float(2 * np.pi * np.sqrt(np.sum(np.abs(f.coeffs) ** 2)))
    return float(np.sqrt(np.sum(f.coeffs ** 2)))


def l2_inner(v: VectorFieldSpec, w: VectorFieldSpec) -> float:
    if v.manifold is not w.manifold or v.resolution != w.resolution:
        raise InputError('Inner product needs fields of one space')
    if v.is_torus:
        return float(4 * np.pi ** 2 * np.sum(np.real(np.conj(v.data) * w.data)))
    # ∫∇Y·∇Y' = l(l+1)δ and rot/∇ parts are orthogonal
    weight = -v.basis.laplacian_eigenvalues
    return float(np.sum(weight * v.data * w.data))


def l2_norm(v: VectorFieldSpec) -> float:
    return float(np.sqrt(max(l2_inner(v, v), 0.0)))


def divergence_norm(v: VectorFieldSpec) -> float:
    return scalar_l2_norm(div(v))


def _torus_integrands(v: VectorFieldSpec, order: int):
    basis = v.basis
    n, values, jac = _torus_dense(v)
    yield n, np.sqrt(np.sum(values ** 2, axis=0))
    if order >= 1:
        yield n, np.sqrt(np.sum(jac ** 2, axis=(0, 1)))
    if order >= 2:
        hess = np.stack([np.stack([basis.dx(j), basis.dy(j)], axis=1) for j in v._torus_jacobian_coeffs])
        hess = basis.synthesize(hess, n)
        yield n, np.sqrt(np.sum(hess ** 2, axis=(0, 1, 2)))


def _sphere_integrands(v: VectorFieldSpec, order: int):
    basis = v.basis
    grid = basis.grid('dense')
    yield grid, np.linalg.norm(v.grid_values(grid), axis=-1)
    if order >= 1:
        T = _sphere_dense_jacobian(v, grid)
        yield grid, np.sqrt(np.sum(T ** 2, axis=(1, 2)))
    if order >= 2:
        degree = v.resolution + 4
        coeffs = basis.analyze(np.moveaxis(T, 0, -1), grid, degree=degree)
        dT = basis.surface_gradient(coeffs, grid, degree=degree)
        proj = np.eye(3) - grid.points[:, :, None] * grid.points[:, None, :]
        hess = np.einsum('pac,cjpb,pjd->pabd', proj, dT, proj)
        yield grid, np.sqrt(np.sum(hess ** 2, axis=(1, 2, 3)))


def sobolev_norm(v: VectorFieldSpec, order: int = 1, p: float = 2.0) -> float:
    """(∫ |v|^p + Σ_{i<=order} |∇^i v|^p)^{1/p} by dense-grid quadrature."""
    if order not in (0, 1, 2):
        raise InputError(f'Sobolev order must be 0, 1 or 2, got {order}')
    if p < 1:
        raise InputError(f'Sobolev exponent must be at least 1, got {p}')
    total = 0.0
    if v.is_torus:
        for n, magnitude in _torus_integrands(v, order):
            total += (2 * np.pi / n) ** 2 * np.sum(magnitude ** p)
    else:
        for grid, magnitude in _sphere_integrands(v, order):
            total += float(grid.weights @ magnitude ** p)
    return float(total ** (1 / p))


def fit_field(points, vectors, manifold, resolution: int) -> VectorFieldSpec:
    """Spectral fit of tangent vectors sampled on the sample grid of ``resolution``.

    Content the basis cannot hold (modes beyond the truncation, Monte-Carlo
    noise) is dropped; its RMS over the grid is kept as ``fit_residual``.
    """
    manifold = get_manifold(manifold)
    grid = sample_grid(manifold, resolution)
    if not grid.matches(points):
        raise InputError(f'Samples are not on the {grid.shape[0]}x{grid.shape[1]} fit grid '
                         f'of {manifold.name} at resolution {resolution}')
    vectors = np.asarray(vectors, dtype=float)
    if vectors.shape != (grid.size, manifold.tangent_dim):
        raise InputError(f'Expected {grid.size} vectors of dimension {manifold.tangent_dim}, got {vectors.shape}')
    if manifold is TORUS:
        basis = torus_basis(resolution)
        coeffs, residuals = basis.analyze(np.moveaxis(vectors, -1, 0).reshape((2,) + grid.shape))
        data = basis.symmetrize(coeffs)
        residual = float(np.sqrt(np.sum(residuals ** 2)))
    else:
        basis = sphere_basis(resolution)
        vectors = SPHERE.project(grid.points, vectors)
        data = basis.analyze_tangent(vectors, grid)
        delta = vectors - basis.synthesize_tangent(data, grid)
        residual = float(np.sqrt(grid.weights @ np.sum(delta ** 2, axis=-1) / (4 * np.pi)))
    log.debug(f'Fitted {manifold.name} field at resolution {resolution}, residual {residual:.3e}')
    return VectorFieldSpec(manifold=manifold, resolution=resolution, data=data, fit_residual=residual)


def fit_samples(samples: Iterable[Tuple[Point, TangentVector]], resolution: int) -> VectorFieldSpec:
    samples = list(samples)
    if not samples:
        raise InputError('No samples to fit')
    manifold = samples[0][0].manifold
    points = np.array([p.coords for p, _ in samples])
    vectors = np.array([v.components for _, v in samples])
    return fit_field(points, vectors, manifold, resolution)


def killing_field(resolution: Optional[int] = None, axis=(0.0, 0.0, 1.0), amplitude: float = 1.0) -> VectorFieldSpec:
    """amplitude · (a × x) on the unit sphere, i.e. rot of ψ = -amplitude · a·x."""
    if resolution is None:
        resolution = default_resolution(SPHERE)
    a = amplitude * np.asarray(axis, dtype=float)
    psi = ScalarFieldSpec.from_function(SPHERE, resolution, lambda x: -x @ a)
    return rot(psi)


def taylor_green(resolution: Optional[int] = None, amplitude: float = 1.0) -> VectorFieldSpec:
    """amplitude · (sin x cos y, -cos x sin y) on the torus."""
    if resolution is None:
        resolution = default_resolution(TORUS)

    def velocity(p):
        x, y = p[..., 0], p[..., 1]
        return amplitude * np.stack([np.sin(x) * np.cos(y), -np.cos(x) * np.sin(y)], axis=-1)
    return VectorFieldSpec.from_function(TORUS, resolution, velocity)
