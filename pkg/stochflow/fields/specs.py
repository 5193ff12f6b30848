"""Immutable spectral field values.

:class:`ScalarFieldSpec` and :class:`VectorFieldSpec` are coefficient arrays
tied to a manifold and a resolution. Vector fields on the torus store their
two coordinate components; on the sphere they store the Helmholtz pair
``(ψ, φ)`` with ``v = x × ∇ψ + ∇φ``, which is tangent by construction.

Pointwise evaluation on the sphere goes through the Cartesian components of
the field and of their surface gradients, both expanded once on the dense
grid and cached on the instance.
"""

from __future__ import annotations

from functools import cached_property
from numbers import Number
from typing import Callable, Optional, Tuple

import attr
import numpy as np

from ..errors import InputError
from ..geometry import SPHERE, TORUS, Manifold, get_manifold
from .spectral import basis_for, cartesian_harmonics

HERMITIAN_TOLERANCE = 1e-9
ZERO_MEAN_TOLERANCE = 1e-10


def _same_space(a, b):
    if a.manifold is not b.manifold or a.resolution != b.resolution:
        raise InputError(f'Cannot combine fields on {a.manifold.name}/{a.resolution} '
                         f'and {b.manifold.name}/{b.resolution}')


def _as_points(manifold: Manifold, points) -> Tuple[np.ndarray, tuple]:
    points = np.asarray(points, dtype=float)
    lead = points.shape[:-1]
    return points.reshape(-1, manifold.coord_dim), lead


class _SpectralValue:
    """Arithmetic shared by scalar and vector specs (linear in ``_payload``)."""

    _payload_name: str

    def _with(self, payload):
        return attr.evolve(self, **{self._payload_name: payload})

    def _payload(self):
        return getattr(self, self._payload_name)

    def __add__(self, other):
        if not isinstance(other, type(self)):
            return NotImplemented
        _same_space(self, other)
        return self._with(self._payload() + other._payload())

    def __sub__(self, other):
        if not isinstance(other, type(self)):
            return NotImplemented
        _same_space(self, other)
        return self._with(self._payload() - other._payload())

    def __neg__(self):
        return self._with(-self._payload())

    def __mul__(self, factor):
        if not isinstance(factor, Number):
            return NotImplemented
        return self._with(self._payload() * float(factor))

    __rmul__ = __mul__

    def __truediv__(self, factor):
        if not isinstance(factor, Number):
            return NotImplemented
        return self._with(self._payload() / float(factor))

    @property
    def basis(self):
        return basis_for(self.manifold, self.resolution)

    @property
    def is_torus(self) -> bool:
        return self.manifold is TORUS


def _payload_converter(value):
    value = np.array(value)
    value = value.astype(complex if np.iscomplexobj(value) else float)
    value.setflags(write=False)
    return value


@attr.s(frozen=True, kw_only=True, eq=False, repr=False)
class ScalarFieldSpec(_SpectralValue):
    _payload_name = 'coeffs'

    manifold: Manifold = attr.ib(converter=get_manifold)
    resolution: int = attr.ib(converter=int)
    coeffs: np.ndarray = attr.ib(converter=_payload_converter)

    def __attrs_post_init__(self):
        basis = self.basis
        if self.coeffs.shape != basis.shape:
            raise InputError(f'{self.manifold.name} scalar at resolution {self.resolution} needs '
                             f'coefficients of shape {basis.shape}, got {self.coeffs.shape}')
        if self.is_torus:
            scale = max(1.0, float(np.max(np.abs(self.coeffs), initial=0)))
            if basis.hermitian_defect(self.coeffs) > HERMITIAN_TOLERANCE * scale:
                raise InputError('Torus coefficients must be Hermitian-symmetric')
            if not np.iscomplexobj(self.coeffs):
                object.__setattr__(self, 'coeffs', _payload_converter(self.coeffs.astype(complex)))
        elif np.iscomplexobj(self.coeffs):
            raise InputError('Sphere coefficients are real')

    def __repr__(self):
        return f'<ScalarFieldSpec {self.manifold.name} res={self.resolution} mean={self.mean:.3g}>'

    @classmethod
    def zeros(cls, manifold, resolution) -> ScalarFieldSpec:
        manifold = get_manifold(manifold)
        basis = basis_for(manifold, resolution)
        dtype = complex if manifold is TORUS else float
        return cls(manifold=manifold, resolution=resolution, coeffs=np.zeros(basis.shape, dtype=dtype))

    @classmethod
    def from_function(cls, manifold, resolution, f: Callable) -> ScalarFieldSpec:
        """Project ``f(points) -> values`` onto the basis by dense-grid quadrature."""
        manifold = get_manifold(manifold)
        basis = basis_for(manifold, resolution)
        grid = basis.grid('dense')
        values = np.asarray(f(grid.points), dtype=float)
        if manifold is TORUS:
            coeffs, _ = basis.analyze(values.reshape(grid.shape))
            coeffs = basis.symmetrize(coeffs)
        else:
            coeffs = basis.analyze(values, grid)
        return cls(manifold=manifold, resolution=resolution, coeffs=coeffs)

    @property
    def mean(self) -> float:
        if self.is_torus:
            K = self.resolution
            return float(self.coeffs[K, K].real)
        return float(self.basis.mean(self.coeffs))

    @property
    def zero_mean(self) -> bool:
        return abs(self.mean) <= ZERO_MEAN_TOLERANCE

    def grid_values(self, grid) -> np.ndarray:
        if self.is_torus:
            return self.basis.synthesize(self.coeffs, grid.shape[0]).reshape(-1)
        return self.basis.synthesize(self.coeffs, grid)

    def evaluate(self, points) -> np.ndarray:
        points, lead = _as_points(self.manifold, points)
        if self.is_torus:
            values = self.basis.evaluate(self.coeffs, points)
        else:
            values = cartesian_harmonics(points, self.resolution) @ self.coeffs
        return values.reshape(lead)


def _vector_shape(manifold, resolution):
    return (2,) + basis_for(manifold, resolution).shape


@attr.s(frozen=True, kw_only=True, eq=False, repr=False)
class VectorFieldSpec(_SpectralValue):
    """A tangent vector field; ``fit_residual`` is set by grid fits only."""

    _payload_name = 'data'

    manifold: Manifold = attr.ib(converter=get_manifold)
    resolution: int = attr.ib(converter=int)
    data: np.ndarray = attr.ib(converter=_payload_converter)
    fit_residual: Optional[float] = attr.ib(default=None)

    def __attrs_post_init__(self):
        shape = _vector_shape(self.manifold, self.resolution)
        if self.data.shape != shape:
            raise InputError(f'{self.manifold.name} vector field at resolution {self.resolution} needs '
                             f'data of shape {shape}, got {self.data.shape}')
        if self.is_torus:
            for c in self.data:
                ScalarFieldSpec(manifold=self.manifold, resolution=self.resolution, coeffs=c)
            if not np.iscomplexobj(self.data):
                object.__setattr__(self, 'data', _payload_converter(self.data.astype(complex)))
        elif np.iscomplexobj(self.data):
            raise InputError('Sphere Helmholtz coefficients are real')

    def __repr__(self):
        return f'<VectorFieldSpec {self.manifold.name} res={self.resolution}>'

    def _with(self, payload):
        return attr.evolve(self, data=payload, fit_residual=None)

    @classmethod
    def zeros(cls, manifold, resolution) -> VectorFieldSpec:
        manifold = get_manifold(manifold)
        dtype = complex if manifold is TORUS else float
        return cls(manifold=manifold, resolution=resolution,
                   data=np.zeros(_vector_shape(manifold, resolution), dtype=dtype))

    @classmethod
    def from_components(cls, x: ScalarFieldSpec, y: ScalarFieldSpec) -> VectorFieldSpec:
        if x.manifold is not TORUS:
            raise InputError('Component construction is for torus fields')
        _same_space(x, y)
        return cls(manifold=TORUS, resolution=x.resolution, data=np.stack([x.coeffs, y.coeffs]))

    @classmethod
    def from_helmholtz(cls, stream: ScalarFieldSpec, potential: ScalarFieldSpec) -> VectorFieldSpec:
        """rot ψ + ∇φ on the sphere."""
        if stream.manifold is not SPHERE:
            raise InputError('Helmholtz construction is for sphere fields')
        _same_space(stream, potential)
        return cls(manifold=SPHERE, resolution=stream.resolution, data=np.stack([stream.coeffs, potential.coeffs]))

    @classmethod
    def from_function(cls, manifold, resolution, fn: Callable) -> VectorFieldSpec:
        """Project ``fn(points) -> tangent vectors`` onto the basis on the dense grid."""
        manifold = get_manifold(manifold)
        basis = basis_for(manifold, resolution)
        grid = basis.grid('dense')
        vectors = manifold.project_tangent(grid.points, np.asarray(fn(grid.points), dtype=float))
        if manifold is TORUS:
            values = np.moveaxis(vectors, -1, 0).reshape((2,) + grid.shape)
            coeffs, _ = basis.analyze(values)
            data = basis.symmetrize(coeffs)
        else:
            data = basis.analyze_tangent(vectors, grid)
        return cls(manifold=manifold, resolution=resolution, data=data)

    @property
    def components(self) -> Tuple[ScalarFieldSpec, ScalarFieldSpec]:
        if not self.is_torus:
            raise InputError('Sphere fields are stored as a Helmholtz pair; use stream/potential')
        return tuple(ScalarFieldSpec(manifold=TORUS, resolution=self.resolution, coeffs=c) for c in self.data)

    @property
    def stream(self) -> ScalarFieldSpec:
        if self.is_torus:
            raise InputError('Torus fields are stored by components')
        return ScalarFieldSpec(manifold=SPHERE, resolution=self.resolution, coeffs=self.data[0])

    @property
    def potential(self) -> ScalarFieldSpec:
        if self.is_torus:
            raise InputError('Torus fields are stored by components')
        return ScalarFieldSpec(manifold=SPHERE, resolution=self.resolution, coeffs=self.data[1])

    @cached_property
    def _cartesian(self):
        """Cartesian components (degree L+1) and their surface gradients (degree L+2)."""
        basis = self.basis
        grid = basis.grid('dense')
        L = self.resolution
        values = basis.synthesize_tangent(self.data, grid)
        cart = basis.analyze(values.T, grid, degree=L + 1)
        grads = basis.surface_gradient(cart, grid, degree=L + 1)
        grad_coeffs = basis.analyze(np.moveaxis(grads, -1, 1), grid, degree=L + 2)
        return cart, grad_coeffs

    @cached_property
    def _torus_jacobian_coeffs(self):
        basis = self.basis
        return np.stack([np.stack([basis.dx(c), basis.dy(c)]) for c in self.data])

    def grid_values(self, grid) -> np.ndarray:
        """Vectors at the nodes of a grid of this basis, shape (P, tangent_dim)."""
        if self.is_torus:
            values = self.basis.synthesize(self.data, grid.shape[0])
            return values.reshape(2, -1).T
        return self.basis.synthesize_tangent(self.data, grid)

    def evaluate(self, points) -> np.ndarray:
        points, lead = _as_points(self.manifold, points)
        if self.is_torus:
            values = self.basis.evaluate(self.data, points).T
        else:
            cart, _ = self._cartesian
            values = cartesian_harmonics(points, self.resolution + 1) @ cart.T
            values = SPHERE.project(points, values)
        return values.reshape(lead + (self.manifold.tangent_dim,))

    def jacobian(self, points) -> np.ndarray:
        """J with ``J @ w = ∇_w v`` at each point, shape (..., td, td)."""
        points, lead = _as_points(self.manifold, points)
        td = self.manifold.tangent_dim
        if self.is_torus:
            J = np.moveaxis(self.basis.evaluate(self._torus_jacobian_coeffs, points), -1, 0)
        else:
            _, grad_coeffs = self._cartesian
            G = np.einsum('pk,cjk->pcj', cartesian_harmonics(points, self.resolution + 2), grad_coeffs)
            proj = np.eye(3) - points[:, :, None] * points[:, None, :]
            J = proj @ G @ proj
        return J.reshape(lead + (td, td))

    def covariant_derivative_at(self, points, w) -> np.ndarray:
        return np.einsum('...ij,...j->...i', self.jacobian(points), np.asarray(w, dtype=float))

    def sampler(self) -> Callable[[np.ndarray], np.ndarray]:
        return self.evaluate


def _times_converter(value):
    value = np.array(value, dtype=float).ravel()
    value.setflags(write=False)
    return value


@attr.s(frozen=True, kw_only=True, eq=False, repr=False)
class TimeField:
    """Vector fields at strictly increasing time nodes, linear in between."""

    times: np.ndarray = attr.ib(converter=_times_converter)
    fields: Tuple[VectorFieldSpec, ...] = attr.ib(converter=tuple)

    def __attrs_post_init__(self):
        if len(self.times) == 0 or len(self.times) != len(self.fields):
            raise InputError('A time field needs one vector field per time node')
        if np.any(np.diff(self.times) <= 0):
            raise InputError('Time nodes must be strictly increasing')
        first = self.fields[0]
        for f in self.fields[1:]:
            _same_space(first, f)

    def __repr__(self):
        return (f'<TimeField {self.manifold.name} res={self.resolution} '
                f'[{self.times[0]:g}, {self.times[-1]:g}] x{len(self.times)}>')

    def __len__(self):
        return len(self.times)

    @classmethod
    def constant(cls, field: VectorFieldSpec, times) -> TimeField:
        times = _times_converter(times)
        return cls(times=times, fields=[field] * len(times))

    @classmethod
    def from_function(cls, times, fn: Callable[[float], VectorFieldSpec]) -> TimeField:
        times = _times_converter(times)
        return cls(times=times, fields=[fn(float(t)) for t in times])

    @property
    def manifold(self) -> Manifold:
        return self.fields[0].manifold

    @property
    def resolution(self) -> int:
        return self.fields[0].resolution

    @property
    def initial(self) -> VectorFieldSpec:
        return self.fields[0]

    @property
    def terminal(self) -> VectorFieldSpec:
        return self.fields[-1]

    def _locate(self, t: float):
        times = self.times
        tol = 1e-9 * max(1.0, abs(times[-1]))
        if t < times[0] - tol or t > times[-1] + tol:
            raise InputError(f'Time {t} outside [{times[0]}, {times[-1]}]')
        if len(times) == 1:
            return 0, 0.0
        i = int(np.clip(np.searchsorted(times, t, side='right') - 1, 0, len(times) - 2))
        alpha = float(np.clip((t - times[i]) / (times[i + 1] - times[i]), 0.0, 1.0))
        return i, alpha

    def at(self, t: float) -> VectorFieldSpec:
        i, alpha = self._locate(t)
        if alpha == 0.0:
            return self.fields[i]
        if alpha == 1.0:
            return self.fields[i + 1]
        return (1 - alpha) * self.fields[i] + alpha * self.fields[i + 1]

    def _blend(self, t, method, points):
        i, alpha = self._locate(t)
        out = getattr(self.fields[i], method)(points)
        if alpha:
            out = (1 - alpha) * out + alpha * getattr(self.fields[i + 1], method)(points)
        return out

    def evaluate(self, t: float, points) -> np.ndarray:
        return self._blend(t, 'evaluate', points)

    def jacobian(self, t: float, points) -> np.ndarray:
        return self._blend(t, 'jacobian', points)

    def sampler(self, sign: float = 1.0) -> Callable[[float, np.ndarray], np.ndarray]:
        """``(t, points) -> sign * v(t, points)``, the drift/source form used by the engine."""
        def sample(t, points):
            return sign * self.evaluate(t, points)
        return sample

    def map(self, fn: Callable[[VectorFieldSpec], VectorFieldSpec]) -> TimeField:
        return attr.evolve(self, fields=[fn(f) for f in self.fields])

    def _check_nodes(self, other: TimeField):
        if len(self.times) != len(other.times) or np.max(np.abs(self.times - other.times)) > 1e-12:
            raise InputError('Time fields live on different time grids')

    def __add__(self, other):
        if not isinstance(other, TimeField):
            return NotImplemented
        self._check_nodes(other)
        return attr.evolve(self, fields=[a + b for a, b in zip(self.fields, other.fields)])

    def __sub__(self, other):
        if not isinstance(other, TimeField):
            return NotImplemented
        self._check_nodes(other)
        return attr.evolve(self, fields=[a - b for a, b in zip(self.fields, other.fields)])

    def __neg__(self):
        return self.map(lambda f: -f)

    def __mul__(self, factor):
        if not isinstance(factor, Number):
            return NotImplemented
        return self.map(lambda f: f * factor)

    __rmul__ = __mul__

    def reversed(self, horizon: float) -> TimeField:
        """Relabel nodes by ``horizon - t`` (backward time <-> physical time)."""
        return TimeField(times=horizon - self.times[::-1], fields=self.fields[::-1])

    def sup_norm(self, order=1, p=2.0) -> float:
        from .calculus import sobolev_norm
        return max(sobolev_norm(f, order, p) for f in self.fields)

    def norms(self, order=1, p=2.0) -> np.ndarray:
        from .calculus import sobolev_norm
        return np.array([sobolev_norm(f, order, p) for f in self.fields])

    def sup_norm_distance(self, other: TimeField, order=1, p=2.0) -> float:
        return (self - other).sup_norm(order, p)
