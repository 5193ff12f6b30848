import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

from stochflow import reference
from stochflow.errors import InputError, NumericalAbort
from stochflow.fields import VectorFieldSpec, divergence_norm, l2_norm
from stochflow.geometry import SPHERE, TORUS, Point
from stochflow.reference import ExactSolution, Family


@pytest.mark.parametrize('family, rate', [
    ('taylor-green', 0.2),
    ('sphere-killing-bochner', 0.1),
    ('sphere-killing-hodge', 0.2),
    ('torus-heat-mode', 0.5),
])
def test_exact_decay_rates(family, rate):
    sol = ExactSolution(family=family, nu=0.1, mode=(1, 2))
    assert sol.rate == pytest.approx(rate)
    assert sol.amplitude_at(2.0) == pytest.approx(np.exp(-2 * rate))


def test_exact_solution_validation():
    with pytest.raises(InputError):
        ExactSolution(family=Family.TAYLOR_GREEN, nu=-1.0)
    with pytest.raises(InputError):
        ExactSolution(family=Family.TORUS_HEAT_MODE, nu=0.1, mode=(0, 0))
    with pytest.raises(ValueError):
        ExactSolution(family='kolmogorov', nu=0.1)


@pytest.mark.parametrize('family', list(Family))
def test_exact_fields_are_divergence_free(family):
    sol = ExactSolution(family=family, nu=0.1, mode=(2, -1), amplitude=1.5)
    v = sol.spec(0.3, 3)
    assert v.manifold is sol.manifold
    assert divergence_norm(v) <= 1e-10
    assert l2_norm(v) > 0


def test_single_point_solutions():
    p = Point(manifold=TORUS, coords=[0.5, 1.0])
    v = reference.taylor_green(1.0, p, nu=0.1)
    assert_allclose(v.components, np.exp(-0.2) * np.array([np.sin(0.5) * np.cos(1.0), -np.cos(0.5) * np.sin(1.0)]))
    q = Point(manifold=SPHERE, coords=[1.0, 0.0, 0.0])
    assert_allclose(reference.sphere_killing(1.0, q, nu=0.1).components, [0.0, np.exp(-0.1), 0.0])
    assert_allclose(reference.sphere_killing(1.0, q, nu=0.1, mode='hodge').components, [0.0, np.exp(-0.2), 0.0])
    h = reference.torus_heat_mode(0.0, p, nu=0.1, mode=(0, 1))
    assert_allclose(h.components, [-np.cos(1.0), 0.0])
    with pytest.raises(InputError):
        reference.taylor_green(0.0, q, nu=0.1)
    with pytest.raises(InputError):
        reference.sphere_killing(0.0, p, nu=0.1)
    with pytest.raises(InputError):
        reference.sphere_killing(0.0, q, nu=0.1, mode='rough')


def test_exact_solution_for_manifold():
    assert reference.exact_solution_for('torus2', 0.1).family is Family.TAYLOR_GREEN
    assert reference.exact_solution_for(SPHERE, 0.1, 'hodge').rate == pytest.approx(0.2)


def test_time_field_of_exact_solution():
    sol = ExactSolution(family=Family.TAYLOR_GREEN, nu=0.5)
    tf = sol.time_field([0.0, 1.0], 2)
    assert_allclose(reference.energy_history(tf), np.pi * np.sqrt(2) * np.exp([0.0, -1.0]), rtol=1e-12)


@pytest.mark.parametrize('sol', [
    ExactSolution(family=Family.TAYLOR_GREEN, nu=0.1),
    ExactSolution(family=Family.TORUS_HEAT_MODE, nu=0.05, mode=(1, 2), amplitude=0.7),
], ids=['taylor-green', 'heat-mode'])
def test_spectral_solver_reproduces_exact_flows(sol):
    times = [0.0, 0.5, 1.0]
    spectral = reference.torus_spectral_ns(sol.spec(0.0, 3), sol.nu, 1.0, 0.01, times=times)
    assert_allclose(spectral.times, times)
    for s, field in zip(times, spectral.fields):
        assert l2_norm(field - sol.spec(s, 3)) <= 1e-8


def test_spectral_solver_carries_the_mean_flow():
    sol = ExactSolution(family=Family.TAYLOR_GREEN, nu=0.1)
    drift = np.array([1.0, 0.0])

    def shifted(s):
        return VectorFieldSpec.from_function(TORUS, 3, lambda p: drift + sol.velocity(s, p - s * drift))
    spectral = reference.torus_spectral_ns(shifted(0.0), sol.nu, 0.5, 0.005)
    assert l2_norm(spectral.terminal - shifted(0.5)) <= 1e-6


def test_spectral_solver_aborts_on_cfl_violation():
    fast = ExactSolution(family=Family.TAYLOR_GREEN, nu=0.0, amplitude=100.0).spec(0.0, 1)
    with pytest.raises(NumericalAbort) as info:
        reference.torus_spectral_ns(fast, 0.0, 1.0, 0.1)
    assert info.value.diagnostics['cfl'] > 1
    with pytest.raises(NumericalAbort):
        reference.torus_spectral_ns(ExactSolution(family=Family.TAYLOR_GREEN, nu=100.0).spec(0.0, 1),
                                    100.0, 0.1, 0.01)


def test_spectral_solver_validation():
    tg = ExactSolution(family=Family.TAYLOR_GREEN, nu=0.1).spec(0.0, 2)
    with pytest.raises(InputError):
        reference.torus_spectral_ns(ExactSolution(family=Family.SPHERE_KILLING_BOCHNER, nu=0.1).spec(0.0, 2),
                                    0.1, 1.0, 0.01)
    with pytest.raises(InputError):
        reference.torus_spectral_ns(tg, 0.1, 1.0, 0.0)
    with pytest.raises(InputError):
        reference.torus_spectral_ns(tg, 0.1, 1.0, 0.01, times=[0.0, 2.0])
    with pytest.raises(InputError):
        reference.torus_spectral_ns(tg, 0.1, 1.0, 0.01, n=4)


def test_vorticity_to_velocity():
    n = 16
    axis = 2 * np.pi * np.arange(n) / n
    x, y = np.meshgrid(axis, axis, indexing='ij')
    w_hat = np.fft.fft2(2 * np.sin(x) * np.sin(y))
    vx, vy = reference.vorticity_to_velocity(w_hat, mean=(0.5, 0.0))
    assert_allclose(vx, 0.5 + np.sin(x) * np.cos(y), atol=1e-12)
    assert_allclose(vy, -np.cos(x) * np.sin(y), atol=1e-12)


def test_reference_does_not_use_the_stochastic_solver():
    code = ('import sys, stochflow.reference; '
            'print(",".join(m for m in ("stochflow.sde_engine", "stochflow.fbsde", "stochflow.ns_solver") '
            'if m in sys.modules))')
    env = {**os.environ, 'PYTHONPATH': str(Path(__file__).resolve().parents[1])}
    out = subprocess.run([sys.executable, '-c', code], capture_output=True, text=True, check=True, env=env)
    assert out.stdout.strip() == ''
