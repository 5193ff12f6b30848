import numpy as np
import pytest
from numpy.testing import assert_allclose

from stochflow.errors import InputError
from stochflow.geometry import (SPHERE, TORUS, ManifoldKind, Point, TangentVector, covariant_derivative,
                                embedding_fields, exp_map, get_manifold, killing_field, metric,
                                parallel_transport, project_to_tangent, ricci_sharp)


def taylor_green(p):
    x, y = p[..., 0], p[..., 1]
    return np.stack([np.sin(x) * np.cos(y), -np.cos(x) * np.sin(y)], axis=-1)


def test_embedding_energy_identity(manifold, rng):
    p = manifold.random_points(rng, 1000)
    w = manifold.random_tangent(rng, p)
    A = manifold.embedding_fields(p)
    energy = np.sum(np.einsum('nkc,nc->nk', A, w) ** 2, axis=-1)
    assert np.max(np.abs(energy - manifold.inner(p, w, w))) <= 1e-12


def test_embedding_drift_identity(manifold, rng):
    p = manifold.random_points(rng, 1000)
    A = manifold.embedding_fields(p)
    pb = np.broadcast_to(p[:, None, :], A.shape[:-1] + (manifold.coord_dim,))
    drift = np.einsum('nmmc->nc', manifold.embedding_field_derivatives(pb, A))
    tol = 1e-10 if manifold is TORUS else 1e-6
    assert np.max(np.abs(drift)) <= tol


def test_projection_is_idempotent(manifold, rng):
    p = manifold.random_points(rng, 200)
    once = manifold.project(p, rng.standard_normal((200, manifold.ambient_dim)))
    twice = manifold.project(p, manifold.pushforward(p, once))
    assert np.max(np.abs(twice - once)) <= 1e-14


def test_exp_stays_on_manifold(rng):
    p = SPHERE.random_points(rng, 100)
    q = SPHERE.exp(p, 3 * SPHERE.random_tangent(rng, p))
    assert_allclose(np.linalg.norm(q, axis=-1), 1.0, atol=1e-14)
    t = TORUS.exp(TORUS.random_points(rng, 100), 10 * rng.standard_normal((100, 2)))
    assert np.all((t >= 0) & (t < 2 * np.pi))


def test_transport_is_isometric_and_tangent(manifold, rng):
    p = manifold.random_points(rng, 500)
    v = manifold.random_tangent(rng, p)
    u1, u2 = manifold.random_tangent(rng, p), manifold.random_tangent(rng, p)
    q = manifold.exp(p, v)
    t1, t2 = manifold.transport(p, v, u1), manifold.transport(p, v, u2)
    assert_allclose(manifold.inner(q, t1, t2), manifold.inner(p, u1, u2), atol=1e-12)
    if manifold is SPHERE:
        assert np.max(np.abs(np.sum(q * t1, axis=-1))) <= 1e-12


def test_inverse_transport_undoes_transport(manifold, rng):
    p = manifold.random_points(rng, 50)
    v = 0.7 * manifold.random_tangent(rng, p)
    u = manifold.random_tangent(rng, p)
    back = manifold.inverse_transport(p, v, manifold.transport(p, v, u))
    assert_allclose(back, u, atol=1e-12)


def test_sphere_transport_along_great_circle_keeps_normal_component():
    p = np.array([1.0, 0.0, 0.0])
    v = np.array([0.0, np.pi / 2, 0.0])
    u = np.array([0.0, 0.0, 1.0])
    assert_allclose(SPHERE.transport(p, v, u), u, atol=1e-15)
    assert_allclose(SPHERE.transport(p, v, np.array([0.0, 1.0, 0.0])), [-1.0, 0.0, 0.0], atol=1e-15)


def test_killing_field_covariant_derivative(rng):
    p = SPHERE.random_points(rng, 200)
    w = SPHERE.random_tangent(rng, p)
    got = SPHERE.covariant_derivative(killing_field(), p, w)
    expected = SPHERE.project(p, np.cross([0.0, 0.0, 1.0], w))
    assert np.max(np.abs(got - expected)) <= 1e-6


def test_torus_covariant_derivative_is_directional_derivative(rng):
    p = TORUS.random_points(rng, 200)
    w = rng.standard_normal((200, 2))

    def field(q):
        return np.stack([np.sin(q[..., 0]), np.zeros(q.shape[:-1])], axis=-1)
    got = TORUS.covariant_derivative(field, p, w)
    assert_allclose(got[:, 0], np.cos(p[:, 0]) * w[:, 0], atol=1e-6)
    assert_allclose(got[:, 1], 0.0, atol=1e-12)


def test_divergence_free_fields(rng):
    p = SPHERE.random_points(rng, 200)
    assert np.max(np.abs(SPHERE.divergence(killing_field((1.0, 2.0, 0.5)), p))) <= 1e-6
    q = TORUS.random_points(rng, 200)
    assert np.max(np.abs(TORUS.divergence(taylor_green, q))) <= 1e-6


def test_divergence_does_not_depend_on_the_frame(manifold, rng):
    p = manifold.random_points(rng, 1000)

    def field(q):
        columns = [np.sin(q[..., 0]), np.cos(q[..., 1]), np.sin(q[..., 0] + q[..., 1]), np.cos(2 * q[..., 1])]
        a = np.stack(columns[:manifold.ambient_dim], axis=-1)
        return manifold.project(q, a)
    basis = manifold.tangent_basis(p)
    c, s = np.cos(0.9), np.sin(0.9)
    turned = np.einsum('ij,njc->nic', np.array([[c, s], [-s, c]]), basis)
    assert_allclose(manifold.divergence(field, p, basis), manifold.divergence(field, p, turned), rtol=0, atol=1e-12)
    # a frame-free Jacobian reproduces directional derivatives
    w = manifold.random_tangent(rng, p)
    jacobian = manifold.covariant_jacobian(field, p)
    assert_allclose(np.einsum('nab,nb->na', jacobian, w), manifold.covariant_derivative(field, p, w), atol=1e-8)


def test_rough_laplacian_eigenfields(rng):
    q = TORUS.random_points(rng, 50)
    assert_allclose(TORUS.rough_laplacian(taylor_green, q), -2 * taylor_green(q), atol=1e-3)
    p = SPHERE.random_points(rng, 50)
    K = killing_field()
    assert_allclose(SPHERE.rough_laplacian(K, p), -K(p), atol=1e-3)


def test_ricci(rng):
    p = SPHERE.random_points(rng, 10)
    v = SPHERE.random_tangent(rng, p)
    assert_allclose(SPHERE.ricci(p, v), v)
    assert_allclose(TORUS.ricci(p[:, :2], v[:, :2]), 0.0)


def test_point_normalization_and_validation():
    p = Point(manifold='torus2', coords=[2 * np.pi + 0.5, -0.25])
    assert_allclose(p.coords, [0.5, 2 * np.pi - 0.25])
    with pytest.raises(InputError):
        Point(manifold='sphere2', coords=[1.0, 1.0, 0.0])
    with pytest.raises(InputError):
        Point(manifold='sphere2', coords=[1.0, 0.0])


def test_tangent_vector_must_be_tangent():
    p = Point(manifold=SPHERE, coords=[0.0, 0.0, 1.0])
    TangentVector(base=p, components=[1.0, 0.0, 0.0])
    with pytest.raises(InputError):
        TangentVector(base=p, components=[0.0, 0.0, 1.0])


def test_single_point_api_checks_base_points():
    p = Point(manifold=SPHERE, coords=[0.0, 0.0, 1.0])
    q = Point(manifold=SPHERE, coords=[1.0, 0.0, 0.0])
    v = TangentVector(base=p, components=[1.0, 0.0, 0.0])
    w = TangentVector(base=q, components=[0.0, 1.0, 0.0])
    assert metric(p, v, v) == pytest.approx(1.0)
    with pytest.raises(InputError):
        metric(p, v, w)
    with pytest.raises(InputError):
        ricci_sharp(q, v)


def test_single_point_api_round_trip():
    p = Point(manifold=SPHERE, coords=[0.0, 0.0, 1.0])
    v = project_to_tangent(p, [0.0, np.pi / 2, 5.0])
    assert_allclose(v.components, [0.0, np.pi / 2, 0.0])
    q = exp_map(p, v)
    assert_allclose(q.coords, [0.0, 1.0, 0.0], atol=1e-15)
    moved = parallel_transport(p, v, v)
    assert moved.base.same_as(q)
    assert_allclose(moved.components, [0.0, 0.0, -np.pi / 2], atol=1e-15)
    fields = embedding_fields(p)
    assert len(fields) == 3
    assert_allclose(fields[2].components, 0.0)
    K = covariant_derivative(killing_field(), p, TangentVector(base=p, components=[1.0, 0.0, 0.0]))
    assert_allclose(K.components, [0.0, 1.0, 0.0], atol=1e-8)


def test_get_manifold_aliases():
    assert get_manifold('T2') is TORUS
    assert get_manifold('unit_sphere2') is SPHERE
    assert get_manifold(SPHERE) is SPHERE
    with pytest.raises(InputError):
        get_manifold('hyperbolic2')


@pytest.mark.parametrize('kind, dims', [
    (ManifoldKind.FLAT_TORUS2, (2, 4, 4)),
    (ManifoldKind.UNIT_SPHERE2, (2, 3, 3)),
])
def test_manifold_kind_dimensions(kind, dims):
    assert (kind.dim, kind.ambient_dim, kind.noise_count) == dims
    assert kind.manifold.kind is kind
