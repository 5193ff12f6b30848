"""Orthonormal frames, scalarization and realization of tensors at a point.

A frame ``u`` stores its basis vectors as the rows of ``basis``. All tangent
representations used in this package are isometric to R^d with the standard
dot product (coordinate components on the torus, ambient components on the
sphere), so the dual frame needed by covariant slots is the frame itself.
"""

from __future__ import annotations

from itertools import product
from typing import Callable, Optional, Tuple, Union

import attr
import numpy as np

from .errors import InputError
from .geometry import Manifold, Point, TangentVector, get_manifold

ORTHONORMAL_TOLERANCE = 1e-12

Rank = Tuple[int, int]


def _float_array(value):
    return np.array(value, dtype=float)


@attr.s(kw_only=True, frozen=True, eq=False, repr=False)
class Frame:
    base: Point = attr.ib(validator=attr.validators.instance_of(Point))
    basis: np.ndarray = attr.ib(converter=_float_array)

    def __attrs_post_init__(self):
        m = self.manifold
        if self.basis.shape != (m.dim, m.tangent_dim):
            raise InputError(f'A {m.name} frame has shape {(m.dim, m.tangent_dim)}, got {self.basis.shape}')
        for e in self.basis:
            if not m.is_tangent(self.base.coords, e):
                raise InputError('Frame vectors must be tangent at the base point')
        gram = self.basis @ self.basis.T
        if np.max(np.abs(gram - np.eye(m.dim))) > ORTHONORMAL_TOLERANCE:
            raise InputError('Frame is not orthonormal')
        self.basis.setflags(write=False)

    def __repr__(self):
        return f'Frame({self.base!r}, {self.basis.tolist()})'

    @property
    def manifold(self) -> Manifold:
        return self.base.manifold

    @property
    def vectors(self):
        return [TangentVector(base=self.base, components=e) for e in self.basis]


@attr.s(kw_only=True, frozen=True, eq=False)
class TensorCoords:
    m: int = attr.ib(validator=attr.validators.instance_of(int))
    n: int = attr.ib(validator=attr.validators.instance_of(int))
    coeffs: np.ndarray = attr.ib(converter=lambda c: np.array(c, dtype=float).ravel())
    d: int = attr.ib(default=2)

    @coeffs.validator
    def _check_length(self, attribute, value):
        if value.size != self.d ** (self.m + self.n):
            raise InputError(f'Rank ({self.m},{self.n}) coefficients need {self.d ** (self.m + self.n)} '
                             f'entries, got {value.size}')

    @property
    def rank(self) -> Rank:
        return self.m, self.n

    @property
    def array(self) -> np.ndarray:
        return self.coeffs.reshape((self.d,) * (self.m + self.n))

    @classmethod
    def from_array(cls, array, m: int, n: int) -> TensorCoords:
        array = np.asarray(array, dtype=float)
        d = array.shape[0] if array.ndim else 2
        return cls(m=m, n=n, coeffs=array, d=d)


@attr.s(kw_only=True, frozen=True, eq=False)
class PointTensor:
    """A rank-(m, n) tensor at a point, each slot in tangent components.

    Calling it evaluates the multilinear form on m + n tangent vectors
    (contravariant slots through the metric).
    """

    base: Point = attr.ib(validator=attr.validators.instance_of(Point))
    m: int = attr.ib()
    n: int = attr.ib()
    array: np.ndarray = attr.ib(converter=_float_array)

    @array.validator
    def _check_shape(self, attribute, value):
        td = self.base.manifold.tangent_dim
        if value.shape != (td,) * (self.m + self.n):
            raise InputError(f'Tensor array must have shape {(td,) * (self.m + self.n)}')

    @property
    def rank(self) -> Rank:
        return self.m, self.n

    def __call__(self, *vectors):
        if len(vectors) != self.m + self.n:
            raise InputError(f'Rank ({self.m},{self.n}) tensor takes {self.m + self.n} arguments')
        out = self.array
        for v in vectors:
            v = v.components if isinstance(v, TangentVector) else np.asarray(v, dtype=float)
            out = np.tensordot(v, out, axes=([0], [0]))
        return float(out)


Tensorish = Union[TangentVector, PointTensor, Callable, np.ndarray]


def _contract_slots(basis, array):
    out = np.asarray(array, dtype=float)
    for axis in range(out.ndim):
        out = np.moveaxis(np.tensordot(basis, out, axes=([1], [axis])), 0, axis)
    return out


def _expand_slots(basis, array):
    out = np.asarray(array, dtype=float)
    for axis in range(out.ndim):
        out = np.moveaxis(np.tensordot(basis.T, out, axes=([1], [axis])), 0, axis)
    return out


def scalarize(u: Frame, theta: Tensorish, rank: Optional[Rank] = None) -> TensorCoords:
    if isinstance(theta, TangentVector):
        if not u.base.same_as(theta.base):
            raise InputError('Tensor is not based at the frame base point')
        if rank not in (None, (1, 0)):
            raise InputError(f'Tangent vectors have rank (1,0), not {rank}')
        return TensorCoords(m=1, n=0, coeffs=u.basis @ theta.components, d=u.manifold.dim)

    if isinstance(theta, PointTensor):
        if not u.base.same_as(theta.base):
            raise InputError('Tensor is not based at the frame base point')
        if rank is not None and tuple(rank) != theta.rank:
            raise InputError(f'Tensor has rank {theta.rank}, not {rank}')
        return TensorCoords(m=theta.m, n=theta.n, coeffs=_contract_slots(u.basis, theta.array),
                            d=u.manifold.dim)

    if callable(theta):
        if rank is None:
            raise InputError('Multilinear evaluators need an explicit rank')
        m, n = rank
        d = u.manifold.dim
        coeffs = np.empty((d,) * (m + n))
        for index in product(range(d), repeat=m + n):
            coeffs[index] = theta(*[u.basis[i] for i in index])
        return TensorCoords(m=m, n=n, coeffs=coeffs, d=d)

    raise InputError(f'Cannot scalarize {type(theta).__name__}')


def realize(u: Frame, c: TensorCoords, rank: Optional[Rank] = None):
    """Inverse of :func:`scalarize`; vectors come back as :class:`TangentVector`."""
    if rank is not None and tuple(rank) != c.rank:
        raise InputError(f'Coefficients have rank {c.rank}, requested {tuple(rank)}')
    if c.d != u.manifold.dim:
        raise InputError(f'Coefficients are {c.d}-dimensional, frame is {u.manifold.dim}-dimensional')
    if c.rank == (1, 0):
        return TangentVector(base=u.base, components=c.coeffs @ u.basis)
    return PointTensor(base=u.base, m=c.m, n=c.n, array=_expand_slots(u.basis, c.array))


def rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def rotate_frame(u: Frame, O) -> Frame:
    O = np.asarray(O, dtype=float)
    d = u.manifold.dim
    if O.shape != (d, d):
        raise InputError(f'Rotation must be {d}x{d}')
    if np.max(np.abs(O.T @ O - np.eye(d))) > ORTHONORMAL_TOLERANCE:
        raise InputError('Matrix is not orthogonal')
    # E'_j = Σ_i O_ij E_i
    return Frame(base=u.base, basis=O.T @ u.basis)


def orthonormalize(manifold: Manifold, points, frames):
    """Ordered Gram-Schmidt of batched frames, after projection onto T_pM."""
    frames = manifold.project_tangent(np.asarray(points, dtype=float)[..., None, :], frames)
    out = np.empty_like(frames)
    for i in range(frames.shape[-2]):
        e = frames[..., i, :]
        for j in range(i):
            e = e - np.sum(e * out[..., j, :], axis=-1, keepdims=True) * out[..., j, :]
        out[..., i, :] = e / np.linalg.norm(e, axis=-1, keepdims=True)
    return out


def transport_frames(manifold: Manifold, points, frames, v):
    """Batched horizontal step: move the base along v and transport each basis vector."""
    points = np.asarray(points, dtype=float)
    v = np.asarray(v, dtype=float)
    new_points = manifold.exp(points, v)
    moved = manifold.transport(points[..., None, :], v[..., None, :], frames)
    return new_points, orthonormalize(manifold, new_points, moved)


def transport_frame(u: Frame, v: TangentVector) -> Frame:
    if not u.base.same_as(v.base):
        raise InputError('Step vector is not based at the frame base point')
    m = u.manifold
    p, basis = transport_frames(m, u.base.coords, u.basis, v.components)
    return Frame(base=Point(manifold=m, coords=p), basis=basis)


def scalarize_vectors(frames, vectors):
    """Batched rank-(1,0) scalarization."""
    return np.einsum('...dc,...c->...d', frames, vectors)


def realize_vectors(frames, coeffs):
    return np.einsum('...dc,...d->...c', frames, coeffs)


def canonical_frame(manifold, p) -> Frame:
    manifold = get_manifold(manifold)
    base = p if isinstance(p, Point) else Point(manifold=manifold, coords=p)
    return Frame(base=base, basis=manifold.tangent_basis(base.coords))


def random_frame(manifold, rng: np.random.Generator) -> Frame:
    manifold = get_manifold(manifold)
    u = canonical_frame(manifold, manifold.random_points(rng, 1)[0])
    return rotate_frame(u, rotation(rng.uniform(0, 2 * np.pi)))


def holonomy_angle(u: Frame, w: Frame) -> float:
    """Rotation angle taking frame u to frame w at the same point."""
    if not u.base.same_as(w.base, tol=1e-9):
        raise InputError('Frames must share a base point')
    e1 = w.basis[0]
    return float(np.arctan2(e1 @ u.basis[1], e1 @ u.basis[0]))
