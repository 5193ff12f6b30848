"""Backward equations for vector fields by Monte-Carlo on the frame bundle.

For terminal data ``h`` and a source ``G`` the backward equation

    ∂θ/∂t + νΔθ + ∇_b θ + G = 0,   θ(T) = h

is solved pointwise through its frame-bundle representation: from a frame
``u`` at ``x`` the horizontal diffusion with drift ``b`` runs over
``[t, T]``, and

    S(θ(t, x))(u) = E[ S(h)(U_T) + ∫_t^T S(G(s, X_s))(U_s) ds ].

The grid values are realized through ``u`` and fitted back into a spectral
field. Times here run backward: the data sit at ``t = T``.

Drivers depending on the solution itself are handled by Picard iteration:
each sweep freezes the previous iterate inside the driver, which turns the
sweep into the linear problem above.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Sequence, Tuple

import attr
import numpy as np

from .errors import InputError, NonContractionError
from .fields import (TimeField, VectorFieldSpec, bochner_laplacian,
                     covariant_derivative_field, fit_field, l2_norm, sample_grid)
from .frame_bundle import Frame, canonical_frame, realize_vectors, scalarize_vectors
from .geometry import Manifold, get_manifold
from .sde_engine import NoiseSpec, Scheme, simulate_forward

log = logging.getLogger('solver.fbsde')

PICARD_TOL = 1e-4
PICARD_MAX_ITERS = 20
NON_CONTRACTION_STREAK = 3

DriverFn = Callable[[float, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def _positive(instance, attribute, value):
    if not value > 0:
        raise InputError(f'{attribute.name} must be positive, got {value}')


def _non_negative(instance, attribute, value):
    if not value >= 0:
        raise InputError(f'{attribute.name} must be non-negative, got {value}')


@attr.s(kw_only=True, frozen=True)
class MonteCarloParams:
    paths: int = attr.ib(converter=int, validator=_positive)
    dt: float = attr.ib(converter=float, validator=_positive)
    seed: int = attr.ib(default=0, converter=int, validator=_non_negative)
    scheme: Scheme = attr.ib(default=Scheme.EXACT_GEODESIC_HEUN, converter=Scheme)
    workers: int = attr.ib(default=1, converter=int, validator=_positive)


@attr.s(kw_only=True, frozen=True)
class Driver:
    """F(t, x, Y, Z) on realized vectors: Y is (n, td), Z is (n, k, td) with Z_i = ∇_{A_i}θ."""

    name: str = attr.ib()
    fn: DriverFn = attr.ib(repr=False)
    lipschitz: float = attr.ib(converter=float, validator=_non_negative)

    def __call__(self, t, x, y, z):
        return self.fn(t, x, y, z)


def linear_in_y(c: float) -> Driver:
    return Driver(name=f'linear_in_y({c:g})', fn=lambda t, x, y, z: -c * y, lipschitz=abs(c))


def zero_driver() -> Driver:
    return Driver(name='zero', fn=lambda t, x, y, z: np.zeros_like(y), lipschitz=0.0)


def gradient_quadratic(coef: float, bound: float = 1.0) -> Driver:
    """coef · Σᵢ |Zᵢ| Zᵢ; Lipschitz with constant 2k·|coef|·bound on |Z| <= bound."""
    def fn(t, x, y, z):
        return coef * np.einsum('nk,nkc->nc', np.linalg.norm(z, axis=-1), z)
    return Driver(name=f'gradient_quadratic({coef:g})', fn=fn, lipschitz=2 * abs(coef) * bound)


def _time_tuple(value):
    return tuple(sorted(float(t) for t in value))


@attr.s(kw_only=True, frozen=True, eq=False)
class BackwardProblem:
    manifold: Manifold = attr.ib(converter=get_manifold)
    nu: float = attr.ib(converter=float, validator=_non_negative)
    horizon: float = attr.ib(converter=float, validator=_non_negative)
    terminal: VectorFieldSpec = attr.ib()
    eval_times: Tuple[float, ...] = attr.ib(converter=_time_tuple)
    mc: MonteCarloParams = attr.ib()
    drift: Optional[TimeField] = attr.ib(default=None)
    source: Optional[TimeField] = attr.ib(default=None)
    driver: Optional[Driver] = attr.ib(default=None)
    stream: Tuple[int, ...] = attr.ib(default=(), converter=tuple)

    def __attrs_post_init__(self):
        if self.terminal.manifold is not self.manifold:
            raise InputError('Terminal field lives on another manifold')
        for name in ('drift', 'source'):
            tf = getattr(self, name)
            if tf is not None and (tf.manifold is not self.manifold or tf.resolution != self.resolution):
                raise InputError(f'{name} field must match the terminal field space')
        if self.source is not None and self.driver is not None:
            raise InputError('Give either a source field or a driver, not both')
        if not self.eval_times:
            raise InputError('No evaluation times')
        if self.eval_times[0] < 0 or self.eval_times[-1] > self.horizon + 1e-12:
            raise InputError(f'Evaluation times must lie in [0, {self.horizon}]')
        if len(set(self.eval_times)) != len(self.eval_times):
            raise InputError('Evaluation times must be distinct')

    @property
    def resolution(self) -> int:
        return self.terminal.resolution

    @property
    def lipschitz(self) -> float:
        return self.driver.lipschitz if self.driver is not None else 0.0

    @property
    def horizon_condition(self) -> float:
        """L·T, the quantity that has to be small for the driver Picard loop to contract."""
        return self.lipschitz * self.horizon

    @property
    def grid(self):
        return sample_grid(self.manifold, self.resolution)


@attr.s(kw_only=True, frozen=True, eq=False)
class MonteCarloReport:
    """Per-point standard errors of one backward evaluation, (n_times, n_points)."""

    times: np.ndarray = attr.ib(repr=False)
    stderr: np.ndarray = attr.ib(repr=False)
    n_paths: int = attr.ib()
    fit_residuals: np.ndarray = attr.ib(repr=False)

    @property
    def max_std(self) -> float:
        return float(np.max(self.stderr, initial=0.0))

    @property
    def mean_std(self) -> float:
        return float(np.mean(self.stderr)) if self.stderr.size else 0.0

    def per_time(self):
        return [
            {'time': float(t), 'max_std': float(np.max(s, initial=0.0)),
             'mean_std': float(np.mean(s)) if s.size else 0.0, 'fit_residual': float(r)}
            for t, s, r in zip(self.times, self.stderr, self.fit_residuals)
        ]

    def for_json(self):
        return {'n_paths': self.n_paths, 'max_std': self.max_std, 'mean_std': self.mean_std,
                'per_time': self.per_time()}


@attr.s(kw_only=True, frozen=True, eq=False)
class BackwardSolution:
    field: TimeField = attr.ib()
    report: MonteCarloReport = attr.ib()


def _drift_sampler(prob: BackwardProblem):
    return prob.drift.sampler() if prob.drift is not None else None


def _driver_source(driver: Driver, iterate: TimeField, manifold: Manifold):
    def source(t, x):
        y = iterate.evaluate(t, x)
        z = np.einsum('nij,nkj->nki', iterate.jacobian(t, x), manifold.embedding_fields(x))
        return driver(t, x, y, z)
    return source


def evaluate_point(
    prob: BackwardProblem, t: float, frame: Frame, *, key: Sequence[int] = (),
    source: Optional[Callable] = None, n_paths: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """θ(t, x) from one initial frame: realized vector and per-component standard error."""
    mc = prob.mc
    manifold = prob.manifold
    if source is None and prob.source is not None:
        source = prob.source.sampler()
    n_paths = n_paths or mc.paths
    noise = NoiseSpec.over(prob.horizon - t, mc.dt, k=manifold.noise_count, seed=mc.seed,
                           scheme=mc.scheme, key=tuple(prob.stream) + tuple(key))
    ens = simulate_forward(frame, _drift_sampler(prob), prob.nu, noise, n_paths=n_paths,
                           t0=t, source=source, record=False)
    y = scalarize_vectors(ens.final_frames, prob.terminal.evaluate(ens.final_points)) + ens.source_integral
    mean = y.mean(axis=0)
    stderr = y.std(axis=0, ddof=1) / math.sqrt(n_paths) if n_paths > 1 else np.zeros_like(mean)
    return realize_vectors(frame.basis, mean), stderr


def _evaluate(prob: BackwardProblem, source) -> BackwardSolution:
    manifold = prob.manifold
    grid = prob.grid
    frames = [canonical_frame(manifold, p) for p in grid.points]
    fields, stderr, residuals = [], [], []
    pool = ThreadPoolExecutor(prob.mc.workers) if prob.mc.workers > 1 else None
    try:
        for i, t in enumerate(prob.eval_times):
            if prob.horizon - t <= 1e-12:
                fields.append(prob.terminal)
                stderr.append(np.zeros(grid.size))
                residuals.append(0.0)
                continue

            def task(g, i=i, t=t):
                return evaluate_point(prob, t, frames[g], key=(i, g), source=source)

            mapper = pool.map if pool else map
            results = list(mapper(task, range(grid.size)))
            vectors = np.array([v for v, _ in results])
            errors = np.array([np.linalg.norm(s) for _, s in results])
            field = fit_field(grid.points, vectors, manifold, prob.resolution)
            log.debug(f't={t:.4g}: max stderr {errors.max():.3e}, fit residual {field.fit_residual:.3e}')
            fields.append(field)
            stderr.append(errors)
            residuals.append(field.fit_residual)
    finally:
        if pool:
            pool.shutdown()
    report = MonteCarloReport(times=np.array(prob.eval_times), stderr=np.array(stderr),
                              n_paths=prob.mc.paths, fit_residuals=np.array(residuals))
    return BackwardSolution(field=TimeField(times=prob.eval_times, fields=fields), report=report)


def evaluate_backward_linear(prob: BackwardProblem) -> BackwardSolution:
    """Feynman-Kac evaluation when the source does not depend on the solution."""
    if prob.driver is not None:
        raise InputError('The linear evaluator takes a source field; use solve_general_fbsde for drivers')
    source = prob.source.sampler() if prob.source is not None else None
    return _evaluate(prob, source)


@attr.s(kw_only=True, frozen=True, eq=False)
class GeneralSolution:
    field: TimeField = attr.ib()
    report: MonteCarloReport = attr.ib()
    distances: Tuple[float, ...] = attr.ib(converter=tuple)
    iterations: int = attr.ib()
    converged: bool = attr.ib()

    @property
    def ratios(self) -> Tuple[float, ...]:
        return _ratios(self.distances)

    def for_json(self):
        return {'iterations': self.iterations, 'converged': self.converged,
                'distances': list(self.distances), 'ratios': list(self.ratios),
                'monte_carlo': self.report.for_json()}


def _ratios(distances):
    return tuple(b / a if a > 0 else math.inf for a, b in zip(distances, distances[1:]))


def _check_contraction(distances, streak=NON_CONTRACTION_STREAK):
    ratios = _ratios(distances)
    if len(ratios) >= streak and all(r >= 1 for r in ratios[-streak:]):
        raise NonContractionError(
            f'Picard distances stopped contracting: ratios {", ".join(f"{r:.3g}" for r in ratios[-streak:])}',
            history=list(distances),
        )


def solve_general_fbsde(prob: BackwardProblem, *, tol: float = PICARD_TOL,
                        max_iters: int = PICARD_MAX_ITERS) -> GeneralSolution:
    """Picard iteration in the driver, starting from θ⁰ ≡ h.

    The Z channel of each sweep is ∇_{A_i} of the previous iterate, computed
    spectrally. Common random numbers are used across sweeps.
    """
    driver = prob.driver or zero_driver()
    if prob.source is not None:
        raise InputError('solve_general_fbsde takes a driver, not a source field')
    log.info(f'Driver {driver.name}: L·T = {prob.horizon_condition:.3g}')
    iterate = TimeField.constant(prob.terminal, prob.eval_times)
    distances = []
    solution = None
    for n in range(1, max_iters + 1):
        solution = _evaluate(prob, _driver_source(driver, iterate, prob.manifold))
        distance = solution.field.sup_norm_distance(iterate, order=1, p=2.0)
        distances.append(distance)
        log.info(f'Picard sweep {n}: sup-t W1,2 distance {distance:.3e}')
        iterate = solution.field
        if distance < tol:
            return GeneralSolution(field=iterate, report=solution.report, distances=distances,
                                   iterations=n, converged=True)
        _check_contraction(distances)
    log.warning(f'Driver Picard loop stopped after {max_iters} sweeps at distance {distances[-1]:.3e}')
    return GeneralSolution(field=iterate, report=solution.report, distances=distances,
                           iterations=max_iters, converged=False)


@attr.s(kw_only=True, frozen=True)
class ResidualReport:
    """Relative L² residual of the backward equation at interior time nodes."""

    times: Tuple[float, ...] = attr.ib(converter=tuple)
    absolute: Tuple[float, ...] = attr.ib(converter=tuple)
    relative: Tuple[float, ...] = attr.ib(converter=tuple)

    @property
    def max_relative(self) -> float:
        return max(self.relative, default=0.0)

    @property
    def max_absolute(self) -> float:
        return max(self.absolute, default=0.0)

    def for_json(self):
        return {**attr.asdict(self), 'max_relative': self.max_relative, 'max_absolute': self.max_absolute}


def _source_field(prob: BackwardProblem, theta: TimeField, t: float) -> Optional[VectorFieldSpec]:
    if prob.source is not None:
        return prob.source.at(t)
    if prob.driver is None:
        return None
    grid = prob.grid
    values = _driver_source(prob.driver, theta, prob.manifold)(t, grid.points)
    return fit_field(grid.points, values, prob.manifold, prob.resolution)


def pde_residual_check(theta: TimeField, prob: BackwardProblem) -> ResidualReport:
    """∂θ/∂t + νΔθ + ∇_b θ + F by central differences in time, spectrally in space."""
    if len(theta) < 3:
        raise InputError('The residual check needs at least three time nodes')
    times, absolute, relative = [], [], []
    for i in range(1, len(theta) - 1):
        t = float(theta.times[i])
        field = theta.fields[i]
        terms = [
            (theta.fields[i + 1] - theta.fields[i - 1]) / float(theta.times[i + 1] - theta.times[i - 1]),
            prob.nu * bochner_laplacian(field),
        ]
        if prob.drift is not None:
            terms.append(covariant_derivative_field(field, prob.drift.at(t)))
        forcing = _source_field(prob, theta, t)
        if forcing is not None:
            terms.append(forcing)
        total = terms[0]
        for term in terms[1:]:
            total = total + term
        scale = sum(l2_norm(term) for term in terms)
        error = l2_norm(total)
        times.append(t)
        absolute.append(error)
        relative.append(error / scale if scale > 0 else 0.0)
    return ResidualReport(times=times, absolute=absolute, relative=relative)


__all__ = [
    'MonteCarloParams', 'Driver', 'BackwardProblem', 'MonteCarloReport', 'BackwardSolution',
    'GeneralSolution', 'ResidualReport', 'evaluate_point', 'evaluate_backward_linear',
    'solve_general_fbsde', 'pde_residual_check', 'linear_in_y', 'zero_driver', 'gradient_quadratic',
]
