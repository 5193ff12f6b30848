import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from stochflow.errors import InputError, NumericalAbort
from stochflow.frame_bundle import canonical_frame
from stochflow.geometry import SPHERE, TORUS
from stochflow.rng import CounterRNG
from stochflow.sde_engine import (NoiseSpec, Scheme, accumulate_transported_source, coordinate_decay,
                                  ergodic_average, generator_residual, simulate_forward,
                                  simulate_variational)


def noise_for(manifold, horizon=0.1, dt=0.01, seed=5, **kwargs):
    return NoiseSpec.over(horizon, dt, k=manifold.noise_count, seed=seed, **kwargs)


def test_noise_spec_covers_horizon():
    noise = NoiseSpec.over(0.1, 0.03, k=4, seed=0)
    assert noise.n_steps == 4
    assert noise.dt == pytest.approx(0.025)
    assert noise.horizon == pytest.approx(0.1)
    assert NoiseSpec.over(0.0, 0.01, k=4, seed=0).n_steps == 0
    with pytest.raises(InputError):
        NoiseSpec.over(-1.0, 0.01, k=4, seed=0)
    with pytest.raises(InputError):
        NoiseSpec(k=4, dt=0.0, n_steps=1, seed=0)


def test_counter_rng_rows_do_not_depend_on_batch_size():
    rng = CounterRNG(seed=11, key=(3,))
    assert_array_equal(rng.normals(7, 10, 3)[:4], rng.normals(7, 4, 3))
    assert not np.array_equal(rng.normals(7, 4, 3), rng.normals(8, 4, 3))
    assert not np.array_equal(rng.normals(7, 4, 3), rng.substream(1).normals(7, 4, 3))


def test_simulation_is_deterministic(manifold):
    u0 = canonical_frame(manifold, manifold.random_points(np.random.default_rng(1), 1)[0])
    a = simulate_forward(u0, None, 0.5, noise_for(manifold), n_paths=32)
    b = simulate_forward(u0, None, 0.5, noise_for(manifold), n_paths=32)
    assert_array_equal(a.final_points, b.final_points)
    assert_array_equal(a.final_frames, b.final_frames)
    c = simulate_forward(u0, None, 0.5, noise_for(manifold), n_paths=8, record=False)
    assert_allclose(a.final_points[:8], c.final_points, atol=1e-12)


def test_noiseless_constant_drift_on_torus():
    u0 = canonical_frame(TORUS, [1.0, 2.0])
    noise = NoiseSpec.over(1.0, 0.01, k=4, seed=0)
    ens = simulate_forward(u0, lambda t, p: np.broadcast_to([1.0, 0.0], p.shape), 0.0, noise, n_paths=3)
    assert_allclose(ens.final_points, np.broadcast_to([2.0, 2.0], (3, 2)), atol=1e-12)
    assert_allclose(ens.final_frames, np.broadcast_to(np.eye(2), (3, 2, 2)))


def test_recorded_ensemble_shapes(manifold):
    u0 = canonical_frame(manifold, manifold.random_points(np.random.default_rng(2), 1)[0])
    noise = noise_for(manifold, horizon=0.05, dt=0.01)
    ens = simulate_forward(u0, None, 0.2, noise, n_paths=6)
    assert ens.recorded
    assert ens.points.shape == (6, 6, manifold.coord_dim)
    assert ens.frames.shape == (6, 6, 2, manifold.tangent_dim)
    assert ens.increments.shape == (5, 6, manifold.noise_count)
    assert_allclose(ens.times, np.linspace(0, 0.05, 6))
    assert not simulate_forward(u0, None, 0.2, noise, n_paths=6, record=False).recorded


@pytest.mark.parametrize('scheme', list(Scheme))
def test_sphere_paths_stay_on_the_bundle(scheme):
    u0 = canonical_frame(SPHERE, [0.0, 0.6, 0.8])
    ens = simulate_forward(u0, None, 1.0, noise_for(SPHERE, horizon=0.5, dt=0.01, scheme=scheme), n_paths=50)
    assert_allclose(np.linalg.norm(ens.final_points, axis=-1), 1.0, atol=1e-12)
    gram = np.einsum('nic,njc->nij', ens.final_frames, ens.final_frames)
    assert_allclose(gram, np.broadcast_to(np.eye(2), gram.shape), atol=1e-12)
    assert_allclose(np.einsum('nic,nc->ni', ens.final_frames, ens.final_points), 0.0, atol=1e-12)


def test_non_finite_drift_aborts():
    u0 = canonical_frame(TORUS, [1.0, 1.0])

    def drift(t, p):
        out = np.zeros(p.shape)
        out[1] = np.nan
        return out
    with pytest.raises(NumericalAbort) as info:
        simulate_forward(u0, drift, 0.1, noise_for(TORUS), n_paths=4)
    assert info.value.diagnostics['path'] == 1


def test_bad_arguments():
    u0 = canonical_frame(TORUS, [1.0, 1.0])
    with pytest.raises(InputError):
        simulate_forward(u0, None, 0.1, NoiseSpec.over(0.1, 0.01, k=3, seed=0), n_paths=4)
    with pytest.raises(InputError):
        simulate_forward(u0, None, -0.1, noise_for(TORUS), n_paths=4)
    with pytest.raises(InputError):
        simulate_forward(u0, None, 0.1, noise_for(TORUS), n_paths=0)


def test_transported_source_integral_on_torus():
    u0 = canonical_frame(TORUS, [0.3, 0.4])
    ens = simulate_forward(u0, None, 0.3, noise_for(TORUS, horizon=0.2, dt=0.01), n_paths=5)
    ens = accumulate_transported_source(ens, lambda t, p: np.broadcast_to([1.0, -2.0], p.shape))
    assert_allclose(ens.source_integral, np.broadcast_to([0.2, -0.4], (5, 2)), atol=1e-12)
    inline = simulate_forward(u0, None, 0.3, noise_for(TORUS, horizon=0.2, dt=0.01), n_paths=5,
                              source=lambda t, p: np.broadcast_to([1.0, -2.0], p.shape))
    assert_allclose(inline.source_integral, ens.source_integral, atol=1e-12)


def test_source_accumulation_needs_recorded_paths():
    u0 = canonical_frame(TORUS, [0.3, 0.4])
    ens = simulate_forward(u0, None, 0.3, noise_for(TORUS), n_paths=5, record=False)
    with pytest.raises(InputError):
        accumulate_transported_source(ens, None)
    with pytest.raises(InputError):
        simulate_variational(ens, 0.3, None)


def test_variational_flow_without_noise_is_transport(manifold):
    u0 = canonical_frame(manifold, manifold.random_points(np.random.default_rng(4), 1)[0])
    ens = simulate_forward(u0, None, 0.0, noise_for(manifold), n_paths=2)
    state = simulate_variational(ens, 0.0, None)
    assert_allclose(state.final, np.broadcast_to(manifold.embedding_fields(u0.base.coords), state.final.shape),
                    atol=1e-12)
    assert state.mean_square_norm().shape == (ens.noise.n_steps + 1, manifold.noise_count)


def test_variational_flow_stays_tangent():
    u0 = canonical_frame(SPHERE, [0.0, 0.0, 1.0])
    ens = simulate_forward(u0, None, 0.5, noise_for(SPHERE, horizon=0.2), n_paths=20)
    R = simulate_variational(ens, 0.5, None).final
    assert_allclose(np.einsum('nkc,nc->nk', R, ens.final_points), 0.0, atol=1e-12)


def test_generator_residual_torus():
    u0 = canonical_frame(TORUS, [0.4, 1.1])

    def f(p):
        return np.sin(p[..., 0]) * np.cos(p[..., 1])
    nu = 0.5
    expected = -2 * nu * f(np.array([0.4, 1.1]))
    report = generator_residual(u0, f, expected, nu=nu, dt=1e-2, n_paths=40000, seed=9)
    assert report.n_paths == 40000
    assert report.within(4, floor=0.02 * abs(expected))


def test_sphere_coordinate_decay():
    u0 = canonical_frame(SPHERE, [0.6, 0.0, 0.8])
    reports = coordinate_decay(u0, nu=0.5, t=0.5, dt=0.01, n_paths=4000, seed=3)
    assert [r.label for r in reports] == ['x1', 'x2', 'x3']
    assert reports[2].expected == pytest.approx(math.exp(-0.5) * 0.8)
    for r in reports:
        assert r.within(4, floor=5e-3)
    with pytest.raises(InputError):
        coordinate_decay(canonical_frame(TORUS, [0.0, 0.0]), nu=0.5, t=0.5, dt=0.01, n_paths=10, seed=3)


def test_ergodic_average_on_sphere():
    u0 = canonical_frame(SPHERE, [0.0, 0.0, 1.0])
    report = ergodic_average(u0, lambda p: p[..., 2] ** 2, 1 / 3, nu=1.0, t=3.0, dt=0.01, n_paths=2000, seed=1)
    assert report.within(4, floor=0.01)
