import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from stochflow.errors import InputError, NonContractionError
from stochflow.fbsde import (BackwardProblem, MonteCarloParams, evaluate_backward_linear, evaluate_point,
                             gradient_quadratic, linear_in_y, pde_residual_check, solve_general_fbsde,
                             zero_driver)
from stochflow.fields import TimeField, VectorFieldSpec, killing_field, l2_inner, l2_norm, taylor_green
from stochflow.frame_bundle import canonical_frame
from stochflow.geometry import SPHERE, TORUS
from stochflow.sde_engine import Scheme


def amplitude(field, reference):
    return l2_inner(field, reference) / l2_inner(reference, reference)


def heat_problem(mc, nu=0.5, horizon=0.1, times=(0.0, 0.05, 0.1), **kwargs):
    return BackwardProblem(manifold=TORUS, nu=nu, horizon=horizon, terminal=taylor_green(1),
                           eval_times=times, mc=mc, **kwargs)


def test_monte_carlo_params_validation():
    mc = MonteCarloParams(paths='100', dt=0.01, scheme='projected-euler')
    assert mc.paths == 100
    assert mc.scheme is Scheme.PROJECTED_EULER
    for bad in ({'paths': 0, 'dt': 0.01}, {'paths': 10, 'dt': -0.1}, {'paths': 10, 'dt': 0.1, 'seed': -1},
                {'paths': 10, 'dt': 0.1, 'workers': 0}):
        with pytest.raises(InputError):
            MonteCarloParams(**bad)
    with pytest.raises(ValueError):
        MonteCarloParams(paths=10, dt=0.1, scheme='leapfrog')


def test_backward_problem_validation(small_mc):
    with pytest.raises(InputError):
        BackwardProblem(manifold=SPHERE, nu=0.1, horizon=1.0, terminal=taylor_green(1), eval_times=[0.0],
                        mc=small_mc)
    with pytest.raises(InputError):
        heat_problem(small_mc, times=(0.0, 0.2))
    with pytest.raises(InputError):
        heat_problem(small_mc, times=(0.05, 0.05))
    with pytest.raises(InputError):
        heat_problem(small_mc, times=())
    source = TimeField.constant(taylor_green(1), [0.0, 0.1])
    with pytest.raises(InputError):
        heat_problem(small_mc, source=source, driver=zero_driver())
    with pytest.raises(InputError):
        heat_problem(small_mc, drift=TimeField.constant(taylor_green(2), [0.0, 0.1]))
    prob = heat_problem(small_mc, times=(0.1, 0.0))
    assert prob.eval_times == (0.0, 0.1)
    assert prob.resolution == 1


def test_drivers():
    y = np.array([[1.0, -2.0]])
    z = np.array([[[3.0, 4.0], [0.0, 0.0], [0.0, 1.0], [0.0, 0.0]]])
    assert_allclose(linear_in_y(2.0)(0.0, None, y, z), [[-2.0, 4.0]])
    assert_allclose(zero_driver()(0.0, None, y, z), 0.0)
    quadratic = gradient_quadratic(0.5, bound=2.0)
    assert_allclose(quadratic(0.0, None, y, z), [[7.5, 10.5]])
    assert quadratic.lipschitz == 2.0
    assert linear_in_y(-3.0).lipschitz == 3.0


def test_terminal_node_is_the_terminal_field(small_mc):
    solution = evaluate_backward_linear(heat_problem(small_mc))
    assert l2_norm(solution.field.terminal - taylor_green(1)) == 0
    assert solution.report.stderr.shape == (3, 16)
    assert_array_equal(solution.report.stderr[-1], 0.0)
    assert solution.report.max_std > 0
    assert [row['time'] for row in solution.report.per_time()] == [0.0, 0.05, 0.1]


def test_noiseless_point_evaluation_returns_terminal_value():
    mc = MonteCarloParams(paths=4, dt=0.01, seed=1)
    prob = BackwardProblem(manifold=SPHERE, nu=0.0, horizon=0.2, terminal=killing_field(2),
                           eval_times=[0.0], mc=mc)
    u = canonical_frame(SPHERE, [0.6, 0.0, 0.8])
    value, stderr = evaluate_point(prob, 0.0, u)
    assert_allclose(value, np.cross([0.0, 0.0, 1.0], u.base.coords), atol=1e-10)
    assert_allclose(stderr, 0.0, atol=1e-12)


def test_constant_drift_transports_the_terminal_field(rng):
    mc = MonteCarloParams(paths=2, dt=0.01)
    shift = VectorFieldSpec.from_function(TORUS, 1, lambda p: np.broadcast_to([1.0, 0.0], p.shape))
    # the backward equation carries ∇_b θ, so the characteristics run along +b
    prob = BackwardProblem(manifold=TORUS, nu=0.0, horizon=0.5, terminal=taylor_green(1),
                           eval_times=[0.0, 0.5], mc=mc, drift=TimeField.constant(shift, [0.0, 0.5]))
    theta = evaluate_backward_linear(prob).field.at(0.0)
    p = TORUS.random_points(rng, 20)
    assert_allclose(theta.evaluate(p), taylor_green(1).evaluate(p + [0.5, 0.0]), atol=1e-8)


def test_source_integrates_along_paths():
    mc = MonteCarloParams(paths=2, dt=0.01)
    source = TimeField.constant(taylor_green(1), [0.0, 0.3])
    prob = BackwardProblem(manifold=TORUS, nu=0.0, horizon=0.3, terminal=taylor_green(1),
                           eval_times=[0.0, 0.3], mc=mc, source=source)
    theta = evaluate_backward_linear(prob).field.at(0.0)
    assert l2_norm(theta - taylor_green(1) * 1.3) <= 1e-10


def test_heat_semigroup_on_taylor_green():
    mc = MonteCarloParams(paths=400, dt=0.01, seed=7)
    solution = evaluate_backward_linear(heat_problem(mc))
    theta = solution.field.at(0.0)
    exact = taylor_green(1) * math.exp(-2 * 0.5 * 0.1)
    assert l2_norm(theta - exact) / l2_norm(exact) <= 0.1
    assert amplitude(theta, taylor_green(1)) == pytest.approx(math.exp(-0.1), rel=0.05)


def test_sphere_killing_field_decays():
    mc = MonteCarloParams(paths=400, dt=0.01, seed=7)
    prob = BackwardProblem(manifold=SPHERE, nu=0.5, horizon=0.2, terminal=killing_field(1),
                           eval_times=[0.0, 0.2], mc=mc)
    theta = evaluate_backward_linear(prob).field.at(0.0)
    assert amplitude(theta, killing_field(1)) == pytest.approx(math.exp(-0.5 * 0.2), rel=0.05)


@pytest.mark.parametrize('workers', [4, 16])
def test_results_do_not_depend_on_worker_count(workers):
    single = evaluate_backward_linear(heat_problem(MonteCarloParams(paths=32, dt=0.02, seed=4)))
    pooled = evaluate_backward_linear(heat_problem(MonteCarloParams(paths=32, dt=0.02, seed=4, workers=workers)))
    for a, b in zip(single.field.fields, pooled.field.fields):
        assert_array_equal(a.data, b.data)
    assert_array_equal(single.report.stderr, pooled.report.stderr)


def test_linear_evaluator_rejects_drivers(small_mc):
    with pytest.raises(InputError):
        evaluate_backward_linear(heat_problem(small_mc, driver=linear_in_y(1.0)))
    source = TimeField.constant(taylor_green(1), [0.0, 0.1])
    with pytest.raises(InputError):
        solve_general_fbsde(heat_problem(small_mc, source=source))


def test_linear_driver_by_picard_iteration():
    mc = MonteCarloParams(paths=2, dt=0.01)
    prob = BackwardProblem(manifold=TORUS, nu=0.0, horizon=0.1, terminal=taylor_green(1),
                           eval_times=np.linspace(0.0, 0.1, 5), mc=mc, driver=linear_in_y(1.0))
    assert prob.horizon_condition == pytest.approx(0.1)
    solution = solve_general_fbsde(prob, tol=1e-6)
    assert solution.converged
    assert solution.iterations <= 10
    assert all(r < 0.5 for r in solution.ratios)
    assert amplitude(solution.field.at(0.0), taylor_green(1)) == pytest.approx(math.exp(-0.1), rel=5e-3)
    assert solution.for_json()['iterations'] == solution.iterations


def test_driver_picard_loop_reports_growth():
    mc = MonteCarloParams(paths=2, dt=0.01)
    prob = BackwardProblem(manifold=TORUS, nu=0.0, horizon=0.1, terminal=taylor_green(1),
                           eval_times=np.linspace(0.0, 0.1, 5), mc=mc, driver=linear_in_y(-50.0))
    with pytest.raises(NonContractionError) as info:
        solve_general_fbsde(prob, tol=1e-6)
    assert len(info.value.history) >= 4
    assert all(r >= 1 for r in info.value.ratios[-3:])


def test_driver_picard_loop_stops_at_iteration_cap(caplog_warnings):
    mc = MonteCarloParams(paths=2, dt=0.01)
    prob = BackwardProblem(manifold=TORUS, nu=0.0, horizon=0.1, terminal=taylor_green(1),
                           eval_times=[0.0, 0.05, 0.1], mc=mc, driver=linear_in_y(1.0))
    solution = solve_general_fbsde(prob, tol=1e-14, max_iters=2)
    assert not solution.converged
    assert solution.iterations == 2
    assert 'stopped after 2 sweeps' in caplog_warnings.text


def test_residual_of_exact_heat_solution(small_mc):
    times = np.linspace(0.0, 0.1, 5)
    prob = heat_problem(small_mc, times=times)
    exact = TimeField.from_function(times, lambda t: taylor_green(1) * math.exp(-(0.1 - t)))
    report = pde_residual_check(exact, prob)
    assert len(report.times) == 3
    assert report.max_relative <= 1e-3
    frozen = pde_residual_check(TimeField.constant(taylor_green(1), times), prob)
    assert frozen.max_relative == pytest.approx(1.0)
    with pytest.raises(InputError):
        pde_residual_check(TimeField.constant(taylor_green(1), [0.0, 0.1]), prob)
