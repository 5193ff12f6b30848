"""Validation suites run by the command line.

Each suite takes a resolved :class:`~stochflow.config.RunConfig` and returns a
:class:`SuiteResult`: named checks against tolerances, long-format tables and
field snapshots. Writing artifacts is left to the caller.
"""

from __future__ import annotations

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import attr
import numpy as np

from . import reference
from .config import RunConfig
from .errors import InputError
from .fbsde import BackwardProblem, evaluate_backward_linear, linear_in_y, solve_general_fbsde
from .fields import (ScalarFieldSpec, TimeField, VectorFieldSpec, divergence_norm, grad, l2_norm,
                     leray_project, rot, taylor_green)
from .frame_bundle import (PointTensor, canonical_frame, holonomy_angle, random_frame, realize,
                           rotate_frame, rotation, scalarize, transport_frame)
from .geometry import SPHERE, TORUS, Manifold, TangentVector, killing_field
from .ns_solver import (LaplacianMode, NSConfig, PicardTrace, amplitude_history, contraction_probe,
                        divergence_decay_check, fit_decay_exponent, solve_ns)
from .sde_engine import (NoiseSpec, coordinate_decay, generator_residual, simulate_forward,
                         simulate_variational)

log = logging.getLogger('main.diagnostics')

TIME_COLUMNS = ('time', 'quantity', 'value')
CHECK_COLUMNS = ('name', 'value', 'tolerance', 'passed')


@attr.s(kw_only=True, frozen=True)
class Check:
    name: str = attr.ib()
    value: float = attr.ib(converter=float)
    tolerance: float = attr.ib(converter=float)
    passed: bool = attr.ib()

    def for_json(self):
        return attr.asdict(self)


@attr.s(kw_only=True)
class SuiteResult:
    name: str = attr.ib()
    checks: List[Check] = attr.ib(factory=list)
    tables: Dict[str, Tuple[Sequence[str], List[dict]]] = attr.ib(factory=dict)
    snapshots: Dict[str, TimeField] = attr.ib(factory=dict)
    traces: Dict[str, PicardTrace] = attr.ib(factory=dict)
    metrics: dict = attr.ib(factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str, value: float, tolerance: float, passed: Optional[bool] = None) -> Check:
        """Record ``value <= tolerance`` unless ``passed`` is given explicitly."""
        value = float(value)
        ok = bool(value <= tolerance) if passed is None else bool(passed)
        c = Check(name=name, value=value, tolerance=tolerance, passed=ok)
        self.checks.append(c)
        (log.info if ok else log.warning)(f'{name}: {value:.3e} (tolerance {tolerance:.3e}) '
                                          f'{"passed" if ok else "FAILED"}')
        return c

    def table(self, name: str, columns=TIME_COLUMNS) -> List[dict]:
        if name not in self.tables:
            self.tables[name] = (tuple(columns), [])
        return self.tables[name][1]

    def check_rows(self):
        return [attr.asdict(c) for c in self.checks]

    def for_json(self):
        return {'suite': self.name, 'passed': self.passed, 'checks': self.checks,
                'metrics': self.metrics, 'traces': self.traces}


def _mc_l2(stderr, manifold: Manifold) -> float:
    """L² size of a field whose pointwise standard error is ``stderr``."""
    stderr = np.asarray(stderr, dtype=float)
    return math.sqrt(manifold.area * float(np.mean(stderr ** 2))) if stderr.size else 0.0


def _relative_error(field: VectorFieldSpec, exact: VectorFieldSpec) -> float:
    return l2_norm(field - exact) / l2_norm(exact)


# ---------------------------------------------------------------- geometry


def _test_fields(manifold: Manifold):
    """Two smooth tangent fields for the metric compatibility check."""
    if manifold is TORUS:
        def u(p):
            return np.stack([np.sin(p[..., 0]), np.cos(p[..., 1])], axis=-1)

        def v(p):
            return np.stack([np.cos(p[..., 0] + p[..., 1]), np.sin(p[..., 0])], axis=-1)
        return u, v

    def u(p):
        return np.cross([0.0, 0.0, 1.0], p)

    def v(p):
        a = np.stack([p[..., 0] ** 2, np.ones_like(p[..., 0]), p[..., 2]], axis=-1)
        return SPHERE.project(p, a)
    return u, v


def _eigenfield(manifold: Manifold):
    """A Bochner eigenfield and its eigenvalue: Taylor-Green (-2) or a rotation field (-1)."""
    if manifold is TORUS:
        shape = reference.ExactSolution(family=reference.Family.TAYLOR_GREEN, nu=0.0).shape
        return shape, -2.0
    return killing_field(), -1.0


def _loop(manifold: Manifold):
    """Start point, geodesic legs of a closed loop and its expected holonomy angle."""
    if manifold is TORUS:
        legs = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)]
        return np.array([0.5, 0.5]), [np.array(v) for v in legs], 0.0
    h = math.pi / 2
    # the octant triangle e1 -> e2 -> e3 -> e1 encloses area π/2
    legs = [(0.0, h, 0.0), (0.0, 0.0, h), (h, 0.0, 0.0)]
    return np.array([1.0, 0.0, 0.0]), [np.array(v) for v in legs], h


def validate_geometry(cfg: RunConfig) -> SuiteResult:
    manifold = cfg.manifold
    rng = np.random.default_rng(cfg.seed)
    n = cfg.geometry_samples
    result = SuiteResult(name='validate-geometry')
    flat = manifold is TORUS

    p = manifold.random_points(rng, n)
    w = manifold.random_tangent(rng, p)
    A = manifold.embedding_fields(p)
    energy = np.sum(np.einsum('nkc,nc->nk', A, w) ** 2, axis=-1)
    result.check('embedding_energy_identity', np.max(np.abs(energy - manifold.inner(p, w, w))), 1e-12)

    pb = np.broadcast_to(p[:, None, :], A.shape[:-1] + (manifold.coord_dim,))
    drift = np.einsum('nmmc->nc', manifold.embedding_field_derivatives(pb, A))
    result.check('embedding_drift_identity', np.max(np.linalg.norm(drift, axis=-1)), 1e-10 if flat else 1e-6)

    a = rng.standard_normal((n, manifold.ambient_dim))
    once = manifold.project(p, a)
    twice = manifold.project(p, manifold.pushforward(p, once))
    result.check('projection_idempotence', np.max(np.abs(twice - once)), 1e-14)

    v = manifold.random_tangent(rng, p)
    u1, u2 = manifold.random_tangent(rng, p), manifold.random_tangent(rng, p)
    q = manifold.exp(p, v)
    defect = manifold.inner(q, manifold.transport(p, v, u1), manifold.transport(p, v, u2)) - manifold.inner(p, u1, u2)
    result.check('transport_isometry', np.max(np.abs(defect)), 1e-12)

    round_trip = equivariance = 0.0
    d = manifold.dim
    for _ in range(n):
        u = random_frame(manifold, rng)
        O = rotation(rng.uniform(0, 2 * np.pi))
        turned = rotate_frame(u, O)
        vec = TangentVector(base=u.base, components=manifold.random_tangent(rng, u.base.coords))
        c = scalarize(u, vec)
        round_trip = max(round_trip, np.max(np.abs(realize(u, c).components - vec.components)))
        equivariance = max(equivariance, np.max(np.abs(scalarize(turned, vec).coeffs - O.T @ c.coeffs)))
        tensor = PointTensor(base=u.base, m=1, n=1, array=u.basis.T @ rng.standard_normal((d, d)) @ u.basis)
        ct = scalarize(u, tensor)
        round_trip = max(round_trip, np.max(np.abs(realize(u, ct).array - tensor.array)))
        equivariance = max(equivariance, np.max(np.abs(scalarize(turned, tensor).array - O.T @ ct.array @ O)))
    result.check('scalarization_round_trip', round_trip, 1e-13)
    result.check('scalarization_equivariance', equivariance, 1e-13)

    start, legs, expected = _loop(manifold)
    frame = start_frame = canonical_frame(manifold, start)
    for leg in legs:
        frame = transport_frame(frame, TangentVector(base=frame.base, components=leg))
    angle = holonomy_angle(start_frame, frame)
    result.check('holonomy_angle', abs(abs(angle) - expected), 1e-10)

    m = min(n, 200)
    pts, dirs = p[:m], w[:m]
    u, v = _test_fields(manifold)
    h = 1e-5
    inner = lambda x: manifold.inner(x, u(x), v(x))  # noqa: E731
    lhs = (inner(manifold.exp(pts, h * dirs)) - inner(manifold.exp(pts, -h * dirs))) / (2 * h)
    rhs = (manifold.inner(pts, manifold.covariant_derivative(u, pts, dirs), v(pts))
           + manifold.inner(pts, u(pts), manifold.covariant_derivative(v, pts, dirs)))
    result.check('metric_compatibility', np.max(np.abs(lhs - rhs)), 1e-6)

    field, eigenvalue = _eigenfield(manifold)
    result.check('divergence_free_eigenfield', np.max(np.abs(manifold.divergence(field, pts))), 1e-6)
    basis = manifold.tangent_basis(pts)
    turned = np.einsum('ij,njc->nic', rotation(0.7).T, basis)
    spread = np.abs(manifold.divergence(u, pts, basis) - manifold.divergence(u, pts, turned))
    result.check('divergence_basis_independence', np.max(spread), 1e-12)
    laplacian = manifold.rough_laplacian(field, pts)
    result.check('bochner_eigen_relation', np.max(np.abs(laplacian - eigenvalue * field(pts))), 1e-3)

    field = VectorFieldSpec.from_function(manifold, cfg.resolution, v)
    projected = leray_project(field)
    result.check('leray_divergence', divergence_norm(projected), 1e-10 if flat else 1e-6)
    result.check('leray_idempotence', l2_norm(leray_project(projected) - projected), 1e-12)
    potential = ScalarFieldSpec.from_function(manifold, cfg.resolution, lambda x: np.cos(x[..., 0]) * np.sin(x[..., 1]))
    result.check('leray_gradient_kernel', l2_norm(leray_project(grad(potential))), 1e-10)

    if not flat:
        rng_w = manifold.random_tangent(rng, pts)
        expected_cd = manifold.project(pts, np.cross([0.0, 0.0, 1.0], rng_w))
        got = manifold.covariant_derivative(killing_field(), pts, rng_w)
        result.check('killing_covariant_derivative', np.max(np.abs(got - expected_cd)), 1e-6)
    return result


# ---------------------------------------------------------------- heat


def _heat_solution(manifold: Manifold, nu: float) -> reference.ExactSolution:
    family = reference.Family.TORUS_HEAT_MODE if manifold is TORUS else reference.Family.SPHERE_KILLING_BOCHNER
    return reference.ExactSolution(family=family, nu=nu)


def heat(cfg: RunConfig) -> SuiteResult:
    """Backward heat flow of a decaying eigenfield, without and with a linear driver."""
    manifold = cfg.manifold
    T = cfg.horizon
    exact = _heat_solution(manifold, cfg.nu)
    times = np.linspace(0.0, T, cfg.time_nodes)
    prob = BackwardProblem(manifold=manifold, nu=cfg.nu, horizon=T, terminal=exact.spec(0.0, cfg.resolution),
                           eval_times=times, mc=cfg.mc)
    result = SuiteResult(name='heat')
    rows = result.table('errors')

    solution = evaluate_backward_linear(prob)
    result.snapshots['theta'] = solution.field
    result.metrics['heat'] = solution.report
    for i, t in enumerate(times):
        ref = exact.spec(T - t, cfg.resolution)
        error = _relative_error(solution.field.fields[i], ref)
        allowance = 3 * _mc_l2(solution.report.stderr[i], manifold) / l2_norm(ref)
        rows.append({'time': t, 'quantity': 'heat_relative_l2_error', 'value': error})
        rows.append({'time': t, 'quantity': 'heat_mc_allowance', 'value': allowance})
        result.check(f'heat_error[t={t:g}]', error, max(0.02, allowance))

    c = cfg.driver_c
    driven = solve_general_fbsde(attr.evolve(prob, driver=linear_in_y(c)), tol=cfg.tol, max_iters=cfg.max_iters)
    result.snapshots['theta_driver'] = driven.field
    result.metrics['driver'] = driven
    for i, t in enumerate(times):
        ref = exact.spec(T - t, cfg.resolution) * math.exp(-c * (T - t))
        error = _relative_error(driven.field.fields[i], ref)
        allowance = 3 * _mc_l2(driven.report.stderr[i], manifold) / l2_norm(ref)
        rows.append({'time': t, 'quantity': 'driver_relative_l2_error', 'value': error})
        rows.append({'time': t, 'quantity': 'driver_mc_allowance', 'value': allowance})
        result.check(f'driver_error[t={t:g}]', error, max(0.02, allowance))
    tail = driven.distances[1:]
    decreasing = all(b < a for a, b in zip(tail, tail[1:]))
    result.check('driver_picard_converged', driven.distances[-1], cfg.tol, passed=driven.converged)
    result.check('driver_picard_monotone', float(not decreasing), 0.0, passed=decreasing)
    return result


# ---------------------------------------------------------------- Navier-Stokes


def initial_velocity(manifold: Manifold, resolution: int) -> VectorFieldSpec:
    """Taylor-Green on the torus, the rotation field about e₃ on the sphere."""
    return reference.exact_solution_for(manifold, 0.0).spec(0.0, resolution)


def ns_config(cfg: RunConfig, v0: Optional[VectorFieldSpec] = None, **changes) -> NSConfig:
    kwargs = dict(
        manifold=cfg.manifold, nu=cfg.nu, horizon=cfg.horizon,
        v0=v0 if v0 is not None else initial_velocity(cfg.manifold, cfg.resolution),
        mc=cfg.mc, laplacian=cfg.laplacian, max_iters=cfg.max_iters, tol=cfg.tol,
        p=cfg.sobolev_p, time_nodes=cfg.time_nodes,
    )
    kwargs.update(changes)
    return NSConfig(**kwargs)


def _solve(result: SuiteResult, ns: NSConfig, label: str) -> TimeField:
    velocity, trace = solve_ns(ns)
    result.traces[label] = trace
    result.snapshots[label] = velocity
    result.check(f'{label}_converged', trace.distances[-1], ns.tol, passed=trace.converged)
    result.metrics[label] = {'iterations': len(trace), 'flagged': trace.flagged,
                             'final_distance': trace.distances[-1]}
    return velocity


def ns_solve(cfg: RunConfig) -> SuiteResult:
    result = SuiteResult(name='ns-solve')
    ns = ns_config(cfg)
    velocity = _solve(result, ns, 'velocity')
    report = divergence_decay_check(velocity, ns)
    result.metrics['divergence'] = report
    rows = result.table('divergence')
    for s, value in zip(report.times, report.divergence):
        rows.append({'time': s, 'quantity': 'unprojected_divergence', 'value': value})
    return result


def _torus_validation(cfg: RunConfig, result: SuiteResult):
    ns = ns_config(cfg)
    velocity = _solve(result, ns, 'velocity')
    result.check('picard_iterations', len(result.traces['velocity']), 8)
    exact = reference.ExactSolution(family=reference.Family.TAYLOR_GREEN, nu=cfg.nu)
    shape = exact.spec(0.0, cfg.resolution)
    times, amplitudes = amplitude_history(velocity, shape)
    rows = result.table('errors')
    spectral = None
    if cfg.reference:
        spectral = reference.torus_spectral_ns(ns.v0, cfg.nu, cfg.horizon, cfg.spectral_dt, times=times)
        result.snapshots['spectral_reference'] = spectral
    for i, (s, a) in enumerate(zip(times, amplitudes)):
        expected = exact.amplitude_at(s)
        rows.append({'time': s, 'quantity': 'amplitude', 'value': a})
        rows.append({'time': s, 'quantity': 'amplitude_exact', 'value': expected})
        rows.append({'time': s, 'quantity': 'amplitude_relative_error', 'value': abs(a - expected) / expected})
        rows.append({'time': s, 'quantity': 'relative_l2_error_exact',
                     'value': _relative_error(velocity.fields[i], exact.spec(s, cfg.resolution))})
        if spectral is not None:
            rows.append({'time': s, 'quantity': 'relative_l2_error_spectral',
                         'value': _relative_error(velocity.fields[i], spectral.fields[i])})
    final = abs(amplitudes[-1] - exact.amplitude_at(times[-1])) / exact.amplitude_at(times[-1])
    result.check('final_amplitude_error', final, 0.03)
    if spectral is not None:
        result.check('spectral_reference_error', _relative_error(velocity.terminal, spectral.terminal), 0.05)


def _sphere_validation(cfg: RunConfig, result: SuiteResult):
    rows = result.table('errors')
    exponents = {}
    for mode in LaplacianMode:
        ns = ns_config(cfg, laplacian=mode)
        label = f'velocity_{mode.value}'
        velocity = _solve(result, ns, label)
        exact = reference.exact_solution_for(SPHERE, cfg.nu, mode)
        times, amplitudes = amplitude_history(velocity, exact.spec(0.0, cfg.resolution))
        for s, a in zip(times, amplitudes):
            rows.append({'time': s, 'quantity': f'amplitude_{mode.value}', 'value': a})
            rows.append({'time': s, 'quantity': f'amplitude_exact_{mode.value}', 'value': exact.amplitude_at(s)})
        exponents[mode] = rate = fit_decay_exponent(times, amplitudes)
        result.metrics[f'decay_exponent_{mode.value}'] = rate
        result.check(f'decay_exponent_{mode.value}', abs(rate - exact.rate) / exact.rate, 0.05)
    ratio = exponents[LaplacianMode.HODGE] / exponents[LaplacianMode.BOCHNER]
    result.metrics['exponent_ratio'] = ratio
    result.check('exponent_ratio', abs(ratio - 2) / 2, 0.10)


def ns_validate(cfg: RunConfig) -> SuiteResult:
    result = SuiteResult(name='ns-validate')
    if cfg.manifold is TORUS:
        _torus_validation(cfg, result)
    else:
        _sphere_validation(cfg, result)
    return result


def _probe_pair(cfg: RunConfig) -> Tuple[VectorFieldSpec, VectorFieldSpec]:
    if cfg.manifold is TORUS:
        v = taylor_green(cfg.resolution)
    else:
        # a rotation field is transported rigidly by itself; use a degree-2 flow instead
        if cfg.resolution < 2:
            raise InputError('The sphere contraction probe needs RESOLUTION >= 2')
        v = rot(ScalarFieldSpec.from_function(SPHERE, cfg.resolution, lambda x: x[..., 0] * x[..., 1]))
    return v, v * 0.9


def contraction(cfg: RunConfig) -> SuiteResult:
    result = SuiteResult(name='contraction-probe')
    v1, v2 = _probe_pair(cfg)
    rows = result.table('ratios')
    ratios = []
    for T in cfg.probe_horizons:
        ns = ns_config(cfg, v0=v1, horizon=T)
        w1, w2 = TimeField.constant(v1, ns.times), TimeField.constant(v2, ns.times)
        report = contraction_probe(w1, w2, ns)
        ratios.append(report.ratio)
        result.metrics[f'T={T:g}'] = report
        for t, r in zip(report.times, report.per_time):
            rows.append({'time': t, 'quantity': f'ratio[T={T:g}]', 'value': r})
        rows.append({'time': T, 'quantity': 'ratio', 'value': report.ratio})
    result.check(f'contraction_ratio[T={cfg.probe_horizons[0]:g}]', ratios[0], 1.0, passed=ratios[0] < 1)
    growing = all(b > a for a, b in zip(ratios, ratios[1:]))
    result.check('ratio_grows_with_horizon', float(not growing), 0.0, passed=growing)
    return result


# ---------------------------------------------------------------- forward flow


def _generator_cases(manifold: Manifold, nu: float):
    """(label, f, Δf/f eigenvalue) for two smooth scalars."""
    if manifold is TORUS:
        return [
            ('sin_x_cos_y', lambda p: np.sin(p[..., 0]) * np.cos(p[..., 1]), -2.0),
            ('cos_2x', lambda p: np.cos(2 * p[..., 0]), -4.0),
        ]
    return [
        ('z', lambda p: p[..., 2], -2.0),
        ('xy', lambda p: p[..., 0] * p[..., 1], -6.0),
    ]


def _variational_drift(manifold: Manifold):
    if manifold is TORUS:
        shape = reference.ExactSolution(family=reference.Family.TAYLOR_GREEN, nu=0.0).shape
        return lambda t, p: shape(p)

    def drift(t, p):
        a = np.zeros(p.shape)
        a[..., 2] = p[..., 0]
        return SPHERE.project(p, a)
    return drift


def _jacobian_error(manifold: Manifold, cfg: RunConfig, eps: float, dt: float, n_paths: int) -> float:
    """Mean |finite-difference Jacobian - R_T| over paths and embedding directions."""
    drift = _variational_drift(manifold)
    start = canonical_frame(manifold, manifold.random_points(np.random.default_rng(cfg.seed), 1)[0])
    noise = NoiseSpec.over(cfg.horizon, dt, k=manifold.noise_count, seed=cfg.seed, scheme=cfg.scheme,
                           key=(0xF1,))
    ens = simulate_forward(start, drift, cfg.nu, noise, n_paths=n_paths, record=True)
    R = simulate_variational(ens, cfg.nu, drift).final
    x0 = start.base.coords
    errors = []
    for i, a in enumerate(manifold.embedding_fields(x0)):
        moved = canonical_frame(manifold, manifold.exp(x0, eps * a))
        shifted = simulate_forward(moved, drift, cfg.nu, noise, n_paths=n_paths, record=False)
        fd = manifold.project_tangent(ens.final_points,
                                      manifold.difference(ens.final_points, shifted.final_points) / eps)
        errors.append(np.linalg.norm(fd - R[:, i, :], axis=-1))
    return float(np.mean(errors))


def flow_diagnostics(cfg: RunConfig) -> SuiteResult:
    manifold = cfg.manifold
    result = SuiteResult(name='flow-diagnostics')
    rows = result.table('estimates', columns=('label', 'estimate', 'expected', 'stderr', 'n_paths'))
    x0 = manifold.random_points(np.random.default_rng(cfg.seed), 1)[0]
    start = canonical_frame(manifold, x0)
    for label, f, eigenvalue in _generator_cases(manifold, cfg.nu):
        expected = cfg.nu * eigenvalue * float(f(x0))
        report = generator_residual(start, f, expected, nu=cfg.nu, dt=cfg.dt, n_paths=cfg.paths,
                                    seed=cfg.seed, scheme=cfg.scheme, label=f'generator_{label}')
        rows.append(attr.asdict(report))
        result.check(f'generator_{label}', report.error, max(0.05 * abs(expected), 3 * report.stderr))
    if manifold is SPHERE:
        for report in coordinate_decay(start, nu=cfg.nu, t=cfg.horizon, dt=cfg.dt, n_paths=cfg.paths,
                                       seed=cfg.seed, scheme=cfg.scheme):
            rows.append(attr.asdict(report))
            result.check(f'coordinate_decay_{report.label}', report.error, 3 * report.stderr + 1e-12)

    n_paths = min(cfg.paths, 256)
    coarse = _jacobian_error(manifold, cfg, cfg.fd_epsilon, cfg.dt, n_paths)
    fine = _jacobian_error(manifold, cfg, cfg.fd_epsilon / 2, cfg.dt / 2, n_paths)
    order = math.log2(coarse / fine) if fine > 0 and coarse > 0 else math.inf
    jac = result.table('jacobian', columns=('epsilon', 'dt', 'error'))
    jac.append({'epsilon': cfg.fd_epsilon, 'dt': cfg.dt, 'error': coarse})
    jac.append({'epsilon': cfg.fd_epsilon / 2, 'dt': cfg.dt / 2, 'error': fine})
    result.metrics['jacobian_order'] = order
    result.check('jacobian_observed_order', order, 0.9, passed=order >= 0.9)
    return result


SUITES = {
    'validate-geometry': validate_geometry,
    'heat': heat,
    'ns-solve': ns_solve,
    'ns-validate': ns_validate,
    'flow-diagnostics': flow_diagnostics,
    'contraction-probe': contraction,
}


def run_suite(cfg: RunConfig) -> SuiteResult:
    return SUITES[cfg.subcommand](cfg)
