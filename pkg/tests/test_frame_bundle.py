import numpy as np
import pytest
from numpy.testing import assert_allclose

from stochflow.errors import InputError
from stochflow.frame_bundle import (Frame, PointTensor, TensorCoords, canonical_frame, holonomy_angle,
                                    random_frame, realize, realize_vectors, rotate_frame, rotation,
                                    scalarize, scalarize_vectors, transport_frame)
from stochflow.geometry import SPHERE, TORUS, Point, TangentVector


def tangent_tensor(u, rng):
    """A random (1,1) tensor at the frame's base point, tangent in both slots."""
    d = u.manifold.dim
    return PointTensor(base=u.base, m=1, n=1, array=u.basis.T @ rng.standard_normal((d, d)) @ u.basis)


def test_frame_must_be_orthonormal_and_tangent():
    p = Point(manifold=SPHERE, coords=[0.0, 0.0, 1.0])
    Frame(base=p, basis=[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    with pytest.raises(InputError):
        Frame(base=p, basis=[[1.0, 0.0, 0.0], [1.0, 1.0, 0.0]])
    with pytest.raises(InputError):
        Frame(base=p, basis=[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(InputError):
        Frame(base=p, basis=np.eye(3))


def test_canonical_frames_are_orthonormal(manifold, rng):
    for x in manifold.random_points(rng, 20):
        u = canonical_frame(manifold, x)
        assert_allclose(u.basis @ u.basis.T, np.eye(2), atol=1e-14)


def test_canonical_frame_at_the_pole():
    u = canonical_frame(SPHERE, [0.0, 0.0, 1.0])
    assert_allclose(u.basis[0], [1.0, 0.0, 0.0])


def test_vector_round_trip_and_equivariance(manifold, rng):
    for _ in range(200):
        u = random_frame(manifold, rng)
        v = TangentVector(base=u.base, components=manifold.random_tangent(rng, u.base.coords))
        c = scalarize(u, v)
        assert np.max(np.abs(realize(u, c).components - v.components)) <= 1e-13
        O = rotation(rng.uniform(0, 2 * np.pi))
        assert np.max(np.abs(scalarize(rotate_frame(u, O), v).coeffs - O.T @ c.coeffs)) <= 1e-13


def test_mixed_tensor_round_trip_and_equivariance(manifold, rng):
    for _ in range(200):
        u = random_frame(manifold, rng)
        theta = tangent_tensor(u, rng)
        c = scalarize(u, theta)
        assert c.rank == (1, 1)
        assert np.max(np.abs(realize(u, c).array - theta.array)) <= 1e-13
        O = rotation(rng.uniform(0, 2 * np.pi))
        turned = scalarize(rotate_frame(u, O), theta).array
        assert np.max(np.abs(turned - O.T @ c.array @ O)) <= 1e-13


def test_multilinear_evaluator_needs_rank(rng):
    u = random_frame(TORUS, rng)
    M = rng.standard_normal((2, 2))

    def form(a, b):
        return a @ M @ b
    with pytest.raises(InputError):
        scalarize(u, form)
    c = scalarize(u, form, rank=(0, 2))
    assert_allclose(c.array, u.basis @ M @ u.basis.T, atol=1e-14)


def test_point_tensor_evaluates_on_vectors(rng):
    u = random_frame(SPHERE, rng)
    theta = tangent_tensor(u, rng)
    v, w = u.vectors
    assert theta(v, w) == pytest.approx(v.components @ theta.array @ w.components)
    with pytest.raises(InputError):
        theta(v)


def test_scalarize_checks_base_point_and_rank(rng):
    u = canonical_frame(SPHERE, [0.0, 0.0, 1.0])
    elsewhere = Point(manifold=SPHERE, coords=[1.0, 0.0, 0.0])
    with pytest.raises(InputError):
        scalarize(u, TangentVector(base=elsewhere, components=[0.0, 1.0, 0.0]))
    v = TangentVector(base=u.base, components=[0.0, 1.0, 0.0])
    with pytest.raises(InputError):
        scalarize(u, v, rank=(0, 1))
    with pytest.raises(InputError):
        realize(u, TensorCoords(m=1, n=0, coeffs=[1.0, 2.0]), rank=(1, 1))
    with pytest.raises(InputError):
        TensorCoords(m=1, n=1, coeffs=[1.0, 2.0, 3.0])


def test_rotate_frame_rejects_non_orthogonal_matrices(rng):
    u = random_frame(TORUS, rng)
    with pytest.raises(InputError):
        rotate_frame(u, [[1.0, 0.1], [0.0, 1.0]])
    with pytest.raises(InputError):
        rotate_frame(u, np.eye(3))


def test_batched_scalarization_matches_single(rng):
    frames = np.stack([random_frame(SPHERE, rng).basis for _ in range(5)])
    coeffs = rng.standard_normal((5, 2))
    vectors = realize_vectors(frames, coeffs)
    assert_allclose(scalarize_vectors(frames, vectors), coeffs, atol=1e-14)


def walk(u, legs):
    for leg in legs:
        u = transport_frame(u, TangentVector(base=u.base, components=leg))
    return u


def test_sphere_octant_holonomy():
    h = np.pi / 2
    u = canonical_frame(SPHERE, [1.0, 0.0, 0.0])
    w = walk(u, [[0.0, h, 0.0], [0.0, 0.0, h], [h, 0.0, 0.0]])
    assert w.base.same_as(u.base, tol=1e-12)
    assert abs(abs(holonomy_angle(u, w)) - np.pi / 2) <= 1e-10


def test_torus_loop_has_no_holonomy():
    u = canonical_frame(TORUS, [0.5, 0.5])
    w = walk(u, [[1.0, 0.0], [0.0, 2.0], [-1.0, 0.0], [0.0, -2.0]])
    assert holonomy_angle(u, w) == pytest.approx(0.0, abs=1e-14)


def test_transported_frame_stays_orthonormal(rng):
    u = random_frame(SPHERE, rng)
    for _ in range(50):
        step = 0.3 * SPHERE.random_tangent(rng, u.base.coords)
        u = transport_frame(u, TangentVector(base=u.base, components=step))
    assert_allclose(u.basis @ u.basis.T, np.eye(2), atol=1e-12)
    assert_allclose(u.basis @ u.base.coords, 0.0, atol=1e-12)


def test_holonomy_needs_common_base(rng):
    with pytest.raises(InputError):
        holonomy_angle(canonical_frame(SPHERE, [1.0, 0.0, 0.0]), canonical_frame(SPHERE, [0.0, 1.0, 0.0]))
