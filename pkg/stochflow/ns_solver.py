"""Incompressible Navier-Stokes through the backward stochastic representation.

Given a divergence-free velocity guess ``w`` on backward time nodes, one
Picard map evaluates the backward equation with forward drift ``-w``, terminal
data ``v0`` and source ``F_w`` (the pressure force; in Hodge mode also
``-ν Ric♯ w``), then Leray-projects every node. The Navier-Stokes solution is
the fixed point of that map.

Library callers see physical time ``s = T - t`` in :func:`solve_ns`; the map
itself works in backward time.
"""

from __future__ import annotations

import enum
import logging
import math
from typing import List, Optional, Tuple

import attr
import numpy as np

from .errors import InputError, NonContractionError
from .fbsde import BackwardProblem, BackwardSolution, MonteCarloParams, evaluate_backward_linear
from .fields import (TimeField, VectorFieldSpec, divergence_norm, l2_inner, leray_project,
                     pressure_force, ricci_sharp_field)
from .geometry import Manifold, get_manifold
from .utils import watch_for_timing

log = logging.getLogger('solver.ns')

INITIAL_DIVERGENCE_TOLERANCE = 1e-8
ITERATE_DIVERGENCE_TOLERANCE = 1e-6
NON_CONTRACTION_STREAK = 3


class LaplacianMode(enum.Enum):
    BOCHNER = 'bochner'
    HODGE = 'hodge'


def _positive(instance, attribute, value):
    if not value > 0:
        raise InputError(f'{attribute.name} must be positive, got {value}')


@attr.s(kw_only=True, frozen=True, eq=False)
class NSConfig:
    manifold: Manifold = attr.ib(converter=get_manifold)
    nu: float = attr.ib(converter=float, validator=_positive)
    horizon: float = attr.ib(converter=float, validator=_positive)
    v0: VectorFieldSpec = attr.ib()
    mc: MonteCarloParams = attr.ib()
    laplacian: LaplacianMode = attr.ib(default=LaplacianMode.BOCHNER, converter=LaplacianMode)
    max_iters: int = attr.ib(default=8, converter=int, validator=_positive)
    tol: float = attr.ib(default=1e-3, converter=float, validator=_positive)
    p: float = attr.ib(default=4.0, converter=float)
    time_nodes: int = attr.ib(default=3, converter=int)

    @p.validator
    def _check_p(self, attribute, value):
        if not value > self.manifold.dim:
            raise InputError(f'Sobolev exponent p must exceed the dimension {self.manifold.dim}, got {value}')

    @time_nodes.validator
    def _check_nodes(self, attribute, value):
        if value < 2:
            raise InputError(f'time_nodes must be at least 2, got {value}')

    def __attrs_post_init__(self):
        if self.v0.manifold is not self.manifold:
            raise InputError('Initial velocity lives on another manifold')
        defect = divergence_norm(self.v0)
        if defect > INITIAL_DIVERGENCE_TOLERANCE:
            raise InputError(f'Initial velocity is not divergence-free: |div v0| = {defect:.3e}')

    @property
    def resolution(self) -> int:
        return self.v0.resolution

    @property
    def hodge(self) -> bool:
        return self.laplacian is LaplacianMode.HODGE

    @property
    def times(self) -> np.ndarray:
        """Backward time nodes, uniform on [0, T]."""
        return np.linspace(0.0, self.horizon, self.time_nodes)


@attr.s(kw_only=True, frozen=True)
class PicardStep:
    iteration: int = attr.ib()
    distance: float = attr.ib()
    norm: float = attr.ib()
    wall_ms: float = attr.ib()
    mc_std: float = attr.ib()


@attr.s(kw_only=True)
class PicardTrace:
    steps: List[PicardStep] = attr.ib(factory=list)
    converged: bool = attr.ib(default=False)
    flagged: bool = attr.ib(default=False)

    FIELDS = ('iteration', 'distance', 'norm', 'wall_ms', 'mc_std')

    def __len__(self):
        return len(self.steps)

    def append(self, step: PicardStep):
        self.steps.append(step)

    @property
    def distances(self) -> List[float]:
        return [s.distance for s in self.steps]

    @property
    def norms(self) -> List[float]:
        return [s.norm for s in self.steps]

    @property
    def ratios(self) -> List[float]:
        d = self.distances
        return [b / a if a > 0 else math.inf for a, b in zip(d, d[1:])]

    def is_monotone(self, burn_in: int = 2) -> bool:
        """Distances strictly decrease from iteration ``burn_in`` on."""
        tail = self.distances[max(burn_in - 1, 0):]
        return all(b < a for a, b in zip(tail, tail[1:]))

    def rows(self, deterministic: bool = False):
        for s in self.steps:
            row = attr.asdict(s)
            if deterministic:
                row['wall_ms'] = 0.0
            yield row

    def for_json(self):
        return {'converged': self.converged, 'flagged': self.flagged,
                'iterations': len(self.steps), 'steps': list(self.rows())}


def _check_divergence_free(w: TimeField, tol=ITERATE_DIVERGENCE_TOLERANCE):
    for t, f in zip(w.times, w.fields):
        defect = divergence_norm(f)
        if defect > tol:
            raise InputError(f'Velocity iterate is not divergence-free at t={t:.4g}: |div| = {defect:.3e}')


def source_field(w: TimeField, cfg: NSConfig) -> TimeField:
    """F_w at every node; Hodge mode subtracts ν Ric♯ w."""
    def source(f):
        f = leray_project(f)
        g = pressure_force(f, cfg.nu, hodge=cfg.hodge)
        if cfg.hodge:
            g = g - cfg.nu * ricci_sharp_field(f)
        return g
    return w.map(source)


def picard_step(w: TimeField, cfg: NSConfig, project: bool = True,
                terminal: Optional[VectorFieldSpec] = None) -> BackwardSolution:
    """One backward solve with drift -w; the Monte-Carlo report rides along."""
    if w.manifold is not cfg.manifold or w.resolution != cfg.resolution:
        raise InputError('Velocity iterate must live in the configured field space')
    prob = BackwardProblem(
        manifold=cfg.manifold, nu=cfg.nu, horizon=cfg.horizon,
        terminal=cfg.v0 if terminal is None else terminal,
        eval_times=w.times, mc=cfg.mc, drift=-w, source=source_field(w, cfg),
    )
    solution = evaluate_backward_linear(prob)
    if project:
        solution = attr.evolve(solution, field=solution.field.map(leray_project))
    return solution


def picard_map(w: TimeField, cfg: NSConfig, project: bool = True) -> TimeField:
    _check_divergence_free(w)
    return picard_step(w, cfg, project).field


def solve_ns(cfg: NSConfig, initial_guess: Optional[TimeField] = None) -> Tuple[TimeField, PicardTrace]:
    """Picard iteration from w₀ ≡ v0; returns the velocity in physical time and the trace."""
    w = initial_guess if initial_guess is not None else TimeField.constant(cfg.v0, cfg.times)
    trace = PicardTrace()
    log.info(f'Solving on {cfg.manifold.name}, nu={cfg.nu:g}, T={cfg.horizon:g}, '
             f'{cfg.laplacian.value} Laplacian, tol {cfg.tol:g}')
    for n in range(1, cfg.max_iters + 1):
        with watch_for_timing(f'Picard iteration {n}') as timing:
            solution = picard_step(w, cfg)
        step = PicardStep(
            iteration=n,
            distance=solution.field.sup_norm_distance(w, order=1, p=cfg.p),
            norm=w.sup_norm(order=2, p=cfg.p),
            wall_ms=timing.ms,
            mc_std=solution.report.max_std,
        )
        trace.append(step)
        log.info(f'Iteration {n}: distance {step.distance:.3e}, norm {step.norm:.3e}, '
                 f'max MC std {step.mc_std:.2e}')
        w = solution.field
        if step.distance < cfg.tol:
            trace.converged = True
            break
        ratios = trace.ratios
        if len(ratios) >= NON_CONTRACTION_STREAK and all(r >= 1 for r in ratios[-NON_CONTRACTION_STREAK:]):
            log.warning(f'Picard iteration is not contracting after {n} iterations')
            raise NonContractionError('Picard iteration is not contracting; the horizon may be too long '
                                      'for the size of the initial velocity',
                                      history=trace.distances, trace=trace)
    if not trace.converged:
        log.warning(f'No convergence within {cfg.max_iters} iterations')
        raise NonContractionError(f'No convergence within {cfg.max_iters} Picard iterations',
                                  history=trace.distances, trace=trace)
    if not trace.is_monotone():
        trace.flagged = True
        log.warning('Picard distances are not monotone after burn-in')
    return w.reversed(cfg.horizon), trace


@attr.s(kw_only=True, frozen=True)
class ContractionReport:
    ratio: float = attr.ib()
    numerator: float = attr.ib()
    denominator: float = attr.ib()
    times: Tuple[float, ...] = attr.ib(converter=tuple)
    per_time: Tuple[float, ...] = attr.ib(converter=tuple)

    def for_json(self):
        return attr.asdict(self)


def contraction_probe(w1: TimeField, w2: TimeField, cfg: NSConfig) -> ContractionReport:
    """sup-t ‖I(w1) - I(w2)‖ / sup-t ‖w1 - w2‖ in W^{1,p}, under common noise."""
    difference = w1 - w2
    denominators = difference.norms(order=1, p=cfg.p)
    denominator = float(np.max(denominators))
    if denominator <= 1e-14:
        raise InputError('Contraction probe needs two distinct velocity fields')
    image = picard_map(w1, cfg) - picard_map(w2, cfg)
    numerators = image.norms(order=1, p=cfg.p)
    numerator = float(np.max(numerators))
    per_time = [n / d if d > 0 else math.nan for n, d in zip(numerators, denominators)]
    report = ContractionReport(ratio=numerator / denominator, numerator=numerator,
                               denominator=denominator, times=w1.times, per_time=per_time)
    log.info(f'Contraction ratio {report.ratio:.4f} at T={cfg.horizon:g}')
    return report


@attr.s(kw_only=True, frozen=True)
class DivergenceReport:
    times: Tuple[float, ...] = attr.ib(converter=tuple)
    divergence: Tuple[float, ...] = attr.ib(converter=tuple)
    noise_floor: float = attr.ib()
    threshold: float = attr.ib()

    @property
    def sup(self) -> float:
        return max(self.divergence, default=0.0)

    @property
    def passed(self) -> bool:
        return self.sup <= self.threshold

    def for_json(self):
        return {**attr.asdict(self), 'sup': self.sup, 'passed': self.passed}


def divergence_decay_check(v: TimeField, cfg: NSConfig) -> DivergenceReport:
    """Divergence of the unprojected backward solution driven by ``v`` (physical time).

    The Monte-Carlo floor is the per-point standard error scaled to an L²
    norm over the manifold and by the top wavenumber of the basis, the size
    of the divergence of a fitted noise field.
    """
    w = v.reversed(cfg.horizon)
    solution = picard_step(w, cfg, project=False, terminal=w.terminal)
    divergence = [divergence_norm(f) for f in solution.field.fields]
    wavenumber = cfg.resolution + 1
    noise_floor = solution.report.mean_std * math.sqrt(cfg.manifold.area) * wavenumber
    threshold = max(1e-3, 5 * noise_floor)
    report = DivergenceReport(times=cfg.horizon - solution.field.times, divergence=divergence,
                              noise_floor=noise_floor, threshold=threshold)
    if not report.passed:
        log.warning(f'Unprojected divergence {report.sup:.3e} exceeds {threshold:.3e}')
    return report


def amplitude_history(v: TimeField, reference: VectorFieldSpec) -> Tuple[np.ndarray, np.ndarray]:
    """L² projection coefficient of each node of ``v`` on ``reference``."""
    norm = l2_inner(reference, reference)
    if norm <= 0:
        raise InputError('Reference field is zero')
    return np.array(v.times), np.array([l2_inner(f, reference) / norm for f in v.fields])


def fit_decay_exponent(times, amplitudes) -> float:
    """λ of the least-squares fit a(s) ≈ a₀ e^{-λ s}."""
    times = np.asarray(times, dtype=float)
    amplitudes = np.asarray(amplitudes, dtype=float)
    if times.size < 2 or np.any(amplitudes <= 0):
        raise InputError('Decay fit needs at least two positive amplitudes')
    slope, _ = np.polyfit(times, np.log(amplitudes), 1)
    return float(-slope)
