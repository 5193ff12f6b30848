# MIT License
#
# Copyright (c) 2020 Tony Wu <tony[dot]wu(at)nyu[dot]edu>
#
# Permission is hereby granted, free of charge, to any person obtaining a copy
# of this software and associated documentation files (the "Software"), to deal
# in the Software without restriction, including without limitation the rights
# to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
# copies of the Software, and to permit persons to whom the Software is
# furnished to do so, subject to the following conditions:
#
# The above copyright notice and this permission notice shall be included in all
# copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
# IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
# FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
# AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
# LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
# OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
# SOFTWARE.

"""Embedded-manifold primitives for the flat 2-torus and the unit 2-sphere.

Every :class:`Manifold` method is vectorized: points carry their coordinates
on the last axis and any number of leading axes is broadcast.

* Torus points are angle pairs ``(x, y)`` reduced mod 2π; tangent vectors are
  components in the coordinate frame ``(∂x, ∂y)``. The isometric embedding is
  the Clifford torus ``(cos x, sin x, cos y, sin y)`` in R⁴.
* Sphere points and tangent vectors are ambient triples in R³.

The module-level functions (:func:`metric`, :func:`exp_map`, ...) are the
single-point API on :class:`Point` / :class:`TangentVector` values and check
base points; they delegate to the batched methods.
"""

from __future__ import annotations

import enum
from abc import ABC, abstractmethod
from typing import Callable, Optional, Union

import attr
import numpy as np

from .errors import InputError

TWO_PI = 2 * np.pi

FD_STEP = 1e-5
LAPLACIAN_FD_STEP = 1e-4

BASE_TOLERANCE = 1e-12
UNIT_TOLERANCE = 1e-12
TANGENT_TOLERANCE = 1e-12

Sampler = Callable[[np.ndarray], np.ndarray]


class ManifoldKind(enum.Enum):
    FLAT_TORUS2 = 'torus2'
    UNIT_SPHERE2 = 'sphere2'

    @property
    def manifold(self) -> Manifold:
        return _MANIFOLDS[self]

    @property
    def dim(self) -> int:
        return self.manifold.dim

    @property
    def ambient_dim(self) -> int:
        return self.manifold.ambient_dim

    @property
    def noise_count(self) -> int:
        """Number of embedding fields A_i; equals the ambient dimension."""
        return self.manifold.noise_count


def wrap_angle(a):
    """Map angle differences into [-π, π)."""
    return (np.asarray(a) + np.pi) % TWO_PI - np.pi


class Manifold(ABC):
    kind: ManifoldKind
    dim = 2
    ambient_dim: int
    noise_count: int
    coord_dim: int
    tangent_dim: int
    curvature: float
    area: float

    @property
    def name(self) -> str:
        return self.kind.value

    def __repr__(self):
        return f'<{type(self).__name__} {self.name}>'

    def __reduce__(self):
        return get_manifold, (self.kind.value,)

    @abstractmethod
    def normalize_point(self, p): ...

    @abstractmethod
    def check_point(self, p): ...

    @abstractmethod
    def embedding(self, p): ...

    @abstractmethod
    def pushforward(self, p, v):
        """Ambient image of a tangent vector."""

    @abstractmethod
    def project(self, p, a):
        """Orthogonal projection Π(p) of an ambient vector onto T_pM."""

    @abstractmethod
    def embedding_fields(self, p):
        """A_i(p) = Π(p)e_i stacked on axis -2, shape (..., k, tangent_dim)."""

    @abstractmethod
    def embedding_field_derivatives(self, p, r):
        """∇_r A_i(p), same layout as :meth:`embedding_fields`."""

    @abstractmethod
    def exp(self, p, v): ...

    @abstractmethod
    def transport(self, p, v, u):
        """Parallel transport of u along t ↦ exp(p, tv), t ∈ [0, 1]."""

    @abstractmethod
    def tangent_basis(self, p):
        """Canonical orthonormal frame at p, shape (..., d, tangent_dim)."""

    @abstractmethod
    def difference(self, p, q):
        """Chart difference q - p used by finite-difference oracles."""

    @abstractmethod
    def random_points(self, rng: np.random.Generator, n: int): ...

    def inner(self, p, v, w):
        return np.sum(np.asarray(v) * np.asarray(w), axis=-1)

    def norm(self, p, v):
        return np.sqrt(self.inner(p, v, v))

    def ricci(self, p, v):
        return self.curvature * np.asarray(v, dtype=float)

    def is_tangent(self, p, v, tol=TANGENT_TOLERANCE):
        return True

    def random_tangent(self, rng: np.random.Generator, p):
        p = np.asarray(p, dtype=float)
        a = rng.standard_normal(p.shape[:-1] + (self.ambient_dim,))
        return self.project(p, a)

    def inverse_transport(self, p, v, u):
        """Transport u from exp(p, v) back to p along the same geodesic."""
        q = self.exp(p, v)
        back = -self.transport(p, v, v)
        return self.transport(q, back, u)

    def covariant_derivative(self, sampler: Sampler, p, w, h=FD_STEP):
        """∇_w V at p for a black-box tangent field V.

        Central differences of the ambient values along the geodesic through
        p with velocity w, followed by projection onto T_pM.
        """
        p = np.asarray(p, dtype=float)
        w = np.asarray(w, dtype=float)
        forward = np.asarray(sampler(self.exp(p, h * w)), dtype=float)
        backward = np.asarray(sampler(self.exp(p, -h * w)), dtype=float)
        return self.project_tangent(p, (forward - backward) / (2 * h))

    def project_tangent(self, p, v):
        """Projection of a vector already expressed in tangent components."""
        return v

    def covariant_jacobian(self, sampler: Sampler, p, h=FD_STEP):
        """Matrix J with ∇_w V = J w for tangent w, shape (..., tangent_dim, tangent_dim).

        Columns are covariant derivatives along the tangent projections of the
        fixed unit directions of the tangent representation, so J does not
        depend on any choice of orthonormal frame.
        """
        p = np.asarray(p, dtype=float)
        eye = np.eye(self.tangent_dim)
        columns = [self.covariant_derivative(sampler, p, self.project_tangent(p, eye[k]), h)
                   for k in range(self.tangent_dim)]
        return np.stack(columns, axis=-1)

    def divergence(self, sampler: Sampler, p, basis=None, h=FD_STEP):
        """Σᵢ ⟨∇_{eᵢ}V, eᵢ⟩ over an orthonormal frame, from one frame-free Jacobian."""
        p = np.asarray(p, dtype=float)
        if basis is None:
            basis = self.tangent_basis(p)
        basis = np.asarray(basis, dtype=float)
        jacobian = self.covariant_jacobian(sampler, p, h)
        return np.einsum('...ia,...ab,...ib->...', basis, jacobian, basis)

    def rough_laplacian(self, sampler: Sampler, p, basis=None, h=LAPLACIAN_FD_STEP):
        """Trace of the second covariant derivative by geodesic central differences."""
        p = np.asarray(p, dtype=float)
        if basis is None:
            basis = self.tangent_basis(p)
        center = np.asarray(sampler(p), dtype=float)
        total = 0
        for i in range(basis.shape[-2]):
            e = h * basis[..., i, :]
            plus = self.inverse_transport(p, e, np.asarray(sampler(self.exp(p, e)), dtype=float))
            minus = self.inverse_transport(p, -e, np.asarray(sampler(self.exp(p, -e)), dtype=float))
            total = total + (plus - 2 * center + minus) / h ** 2
        return total


class FlatTorus(Manifold):
    kind = ManifoldKind.FLAT_TORUS2
    ambient_dim = 4
    noise_count = 4
    coord_dim = 2
    tangent_dim = 2
    curvature = 0.0
    area = TWO_PI ** 2

    def normalize_point(self, p):
        return np.mod(np.asarray(p, dtype=float), TWO_PI)

    def check_point(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape[-1:] != (2,) or not np.all(np.isfinite(p)):
            raise InputError(f'Torus points are finite angle pairs, got shape {p.shape}')

    def embedding(self, p):
        p = np.asarray(p, dtype=float)
        x, y = p[..., 0], p[..., 1]
        return np.stack([np.cos(x), np.sin(x), np.cos(y), np.sin(y)], axis=-1)

    def _jacobian(self, p):
        p = np.asarray(p, dtype=float)
        x, y = p[..., 0], p[..., 1]
        zero = np.zeros_like(x)
        # rows: ambient coordinates, columns: ∂x, ∂y
        return np.stack([
            np.stack([-np.sin(x), zero], axis=-1),
            np.stack([np.cos(x), zero], axis=-1),
            np.stack([zero, -np.sin(y)], axis=-1),
            np.stack([zero, np.cos(y)], axis=-1),
        ], axis=-2)

    def pushforward(self, p, v):
        return np.einsum('...ac,...c->...a', self._jacobian(p), np.asarray(v, dtype=float))

    def project(self, p, a):
        return np.einsum('...ac,...a->...c', self._jacobian(p), np.asarray(a, dtype=float))

    def embedding_fields(self, p):
        return self._jacobian(p)

    def embedding_field_derivatives(self, p, r):
        p = np.asarray(p, dtype=float)
        r = np.asarray(r, dtype=float)
        x, y = p[..., 0], p[..., 1]
        rx, ry = r[..., 0], r[..., 1]
        zero = np.zeros_like(rx * x)
        return np.stack([
            np.stack([-np.cos(x) * rx, zero], axis=-1),
            np.stack([-np.sin(x) * rx, zero], axis=-1),
            np.stack([zero, -np.cos(y) * ry], axis=-1),
            np.stack([zero, -np.sin(y) * ry], axis=-1),
        ], axis=-2)

    def exp(self, p, v):
        return np.mod(np.asarray(p, dtype=float) + np.asarray(v, dtype=float), TWO_PI)

    def transport(self, p, v, u):
        return np.array(np.broadcast_to(u, np.broadcast_shapes(np.shape(u), np.shape(v))), dtype=float)

    def tangent_basis(self, p):
        p = np.asarray(p, dtype=float)
        return np.broadcast_to(np.eye(2), p.shape[:-1] + (2, 2)).copy()

    def difference(self, p, q):
        return wrap_angle(np.asarray(q, dtype=float) - np.asarray(p, dtype=float))

    def random_points(self, rng, n):
        return rng.uniform(0, TWO_PI, size=(n, 2))


class UnitSphere(Manifold):
    kind = ManifoldKind.UNIT_SPHERE2
    ambient_dim = 3
    noise_count = 3
    coord_dim = 3
    tangent_dim = 3
    curvature = 1.0
    area = 4 * np.pi

    def normalize_point(self, p):
        p = np.asarray(p, dtype=float)
        return p / np.linalg.norm(p, axis=-1, keepdims=True)

    def check_point(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape[-1:] != (3,):
            raise InputError(f'Sphere points are ambient triples, got shape {p.shape}')
        if np.any(np.abs(np.linalg.norm(p, axis=-1) - 1) > UNIT_TOLERANCE):
            raise InputError('Sphere point is not on the unit sphere')

    def embedding(self, p):
        return np.asarray(p, dtype=float)

    def pushforward(self, p, v):
        return np.asarray(v, dtype=float)

    def project(self, p, a):
        p = np.asarray(p, dtype=float)
        a = np.asarray(a, dtype=float)
        return a - np.sum(p * a, axis=-1, keepdims=True) * p

    project_tangent = project

    def is_tangent(self, p, v, tol=TANGENT_TOLERANCE):
        v = np.asarray(v, dtype=float)
        scale = np.maximum(1, np.linalg.norm(v, axis=-1))
        return bool(np.all(np.abs(np.sum(np.asarray(p) * v, axis=-1)) <= tol * scale))

    def embedding_fields(self, p):
        p = np.asarray(p, dtype=float)
        eye = np.broadcast_to(np.eye(3), p.shape[:-1] + (3, 3))
        return eye - p[..., :, None] * p[..., None, :]

    def embedding_field_derivatives(self, p, r):
        p = np.asarray(p, dtype=float)
        r = np.asarray(r, dtype=float)
        return -p[..., :, None] * r[..., None, :]

    def exp(self, p, v):
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        n = np.linalg.norm(v, axis=-1, keepdims=True)
        safe = np.where(n > 0, n, 1)
        q = np.cos(n) * p + np.sin(n) * v / safe
        return q / np.linalg.norm(q, axis=-1, keepdims=True)

    def transport(self, p, v, u):
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        u = np.asarray(u, dtype=float)
        n = np.linalg.norm(v, axis=-1, keepdims=True)
        safe = np.where(n > 0, n, 1)
        e = v / safe
        along = np.sum(u * e, axis=-1, keepdims=True)
        # the normal x × e is fixed; the (x, e) plane rotates by |v|
        return u + along * ((np.cos(n) - 1) * e - np.sin(n) * p)

    def tangent_basis(self, p):
        p = np.asarray(p, dtype=float)
        x, y = p[..., 0], p[..., 1]
        rho = np.hypot(x, y)
        polar = rho < 1e-12
        safe = np.where(polar, 1, rho)
        east = np.stack([-y / safe, x / safe, np.zeros_like(x)], axis=-1)
        east = np.where(polar[..., None], np.array([1.0, 0.0, 0.0]), east)
        north = np.cross(p, east)
        return np.stack([east, north], axis=-2)

    def difference(self, p, q):
        return np.asarray(q, dtype=float) - np.asarray(p, dtype=float)

    def random_points(self, rng, n):
        return self.normalize_point(rng.standard_normal((n, 3)))


TORUS = FlatTorus()
SPHERE = UnitSphere()

_MANIFOLDS = {m.kind: m for m in (TORUS, SPHERE)}
_ALIASES = {
    'torus': TORUS, 'torus2': TORUS, 't2': TORUS, 'flattorus2': TORUS,
    'sphere': SPHERE, 'sphere2': SPHERE, 's2': SPHERE, 'unitsphere2': SPHERE,
}


def get_manifold(spec: Union[str, ManifoldKind, Manifold]) -> Manifold:
    if isinstance(spec, Manifold):
        return spec
    if isinstance(spec, ManifoldKind):
        return _MANIFOLDS[spec]
    try:
        return _ALIASES[str(spec).lower().replace('_', '').replace('-', '')]
    except KeyError:
        raise InputError(f'Unsupported manifold {spec!r}; expected one of torus2, sphere2')


def _float_array(value):
    return np.array(value, dtype=float)


@attr.s(kw_only=True, frozen=True, eq=False, repr=False)
class Point:
    manifold: Manifold = attr.ib(converter=get_manifold)
    coords: np.ndarray = attr.ib(converter=_float_array)

    def __attrs_post_init__(self):
        self.manifold.check_point(self.coords)
        if self.coords.ndim != 1:
            raise InputError('Point holds a single position; use Manifold methods for batches')
        object.__setattr__(self, 'coords', self.manifold.normalize_point(self.coords))
        self.coords.setflags(write=False)

    def __repr__(self):
        return f'Point({self.manifold.name}, {self.coords.tolist()})'

    def same_as(self, other: Point, tol=BASE_TOLERANCE) -> bool:
        if other.manifold is not self.manifold:
            return False
        delta = self.manifold.difference(self.coords, other.coords)
        return bool(np.max(np.abs(delta)) <= tol)


@attr.s(kw_only=True, frozen=True, eq=False, repr=False)
class TangentVector:
    base: Point = attr.ib(validator=attr.validators.instance_of(Point))
    components: np.ndarray = attr.ib(converter=_float_array)

    def __attrs_post_init__(self):
        m = self.base.manifold
        if self.components.shape != (m.tangent_dim,):
            raise InputError(f'{m.name} tangent vectors have {m.tangent_dim} components, '
                             f'got shape {self.components.shape}')
        if not m.is_tangent(self.base.coords, self.components):
            raise InputError('Vector is not tangent at its base point')
        self.components.setflags(write=False)

    def __repr__(self):
        return f'TangentVector({self.base!r}, {self.components.tolist()})'

    @property
    def manifold(self) -> Manifold:
        return self.base.manifold


def _check_base(p: Point, *vectors: TangentVector):
    for v in vectors:
        if not p.same_as(v.base):
            raise InputError(f'Base point mismatch: {v.base!r} is not {p!r}')


def metric(p: Point, v: TangentVector, w: TangentVector) -> float:
    _check_base(p, v, w)
    return float(p.manifold.inner(p.coords, v.components, w.components))


def project_to_tangent(p: Point, a) -> TangentVector:
    a = np.asarray(a, dtype=float)
    if a.shape != (p.manifold.ambient_dim,):
        raise InputError(f'Ambient vectors of {p.manifold.name} have {p.manifold.ambient_dim} entries')
    return TangentVector(base=p, components=p.manifold.project(p.coords, a))


def embedding_fields(p: Point) -> list:
    fields = p.manifold.embedding_fields(p.coords)
    return [TangentVector(base=p, components=a) for a in fields]


def covariant_derivative(sampler: Sampler, p: Point, w: TangentVector, h=FD_STEP) -> TangentVector:
    _check_base(p, w)
    value = p.manifold.covariant_derivative(sampler, p.coords, w.components, h)
    return TangentVector(base=p, components=value)


def divergence(sampler: Sampler, p: Point, basis: Optional[np.ndarray] = None, h=FD_STEP) -> float:
    return float(p.manifold.divergence(sampler, p.coords, basis, h))


def ricci_sharp(p: Point, v: TangentVector) -> TangentVector:
    _check_base(p, v)
    return TangentVector(base=p, components=p.manifold.ricci(p.coords, v.components))


def exp_map(p: Point, v: TangentVector) -> Point:
    _check_base(p, v)
    return Point(manifold=p.manifold, coords=p.manifold.exp(p.coords, v.components))


def parallel_transport(p: Point, v: TangentVector, u: TangentVector) -> TangentVector:
    _check_base(p, v, u)
    q = exp_map(p, v)
    return TangentVector(base=q, components=p.manifold.transport(p.coords, v.components, u.components))


def rough_laplacian(sampler: Sampler, p: Point, h=LAPLACIAN_FD_STEP) -> TangentVector:
    return TangentVector(base=p, components=p.manifold.rough_laplacian(sampler, p.coords, h=h))


def tangent_basis(p: Point) -> np.ndarray:
    return p.manifold.tangent_basis(p.coords)


def embedding(p: Point) -> np.ndarray:
    return p.manifold.embedding(p.coords)


def killing_field(axis=(0.0, 0.0, 1.0)) -> Sampler:
    """Rotation field a × x on the unit sphere."""
    axis = np.asarray(axis, dtype=float)

    def sampler(points):
        return np.cross(axis, np.asarray(points, dtype=float))
    return sampler
