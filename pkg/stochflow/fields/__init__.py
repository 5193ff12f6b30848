"""Spectral scalar and vector fields on the flat torus and the unit sphere."""

from .calculus import (advective_divergence, bochner_laplacian, covariant_derivative_field,
                       div, divergence_norm, fit_field, fit_samples, grad, gradient_part,
                       hodge_laplacian, killing_field, l2_inner, l2_norm, laplace_inverse,
                       laplacian, leray_project, mean, pressure_force, ricci_sharp_field, rot,
                       scalar_l2_norm, sobolev_norm, taylor_green)
from .specs import ScalarFieldSpec, TimeField, VectorFieldSpec
from .spectral import (Grid, SphereBasis, TorusBasis, basis_for, default_resolution,
                       dense_grid, sample_grid)

__all__ = [
    'ScalarFieldSpec', 'VectorFieldSpec', 'TimeField',
    'Grid', 'TorusBasis', 'SphereBasis', 'basis_for', 'default_resolution', 'sample_grid', 'dense_grid',
    'grad', 'div', 'rot', 'laplacian', 'laplace_inverse', 'leray_project', 'gradient_part',
    'bochner_laplacian', 'hodge_laplacian', 'ricci_sharp_field', 'covariant_derivative_field',
    'advective_divergence', 'pressure_force', 'sobolev_norm', 'l2_inner', 'l2_norm',
    'scalar_l2_norm', 'divergence_norm', 'mean', 'fit_field', 'fit_samples',
    'killing_field', 'taylor_green',
]
