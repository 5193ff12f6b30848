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

"""Forward horizontal SDEs on the orthonormal frame bundle.

The base path solves the Stratonovich equation

    dX = √(2ν) Σᵢ Aᵢ(X)∘dBⁱ + b(t, X) dt

and the frame is its stochastic parallel transport. The drift ``b`` is a
callable ``b(t, points) -> vectors`` supplied with its sign by the caller
(the Navier-Stokes solver passes ``-w``).

Per step, :attr:`Scheme.EXACT_GEODESIC_HEUN` forms the tangent increment
``δ1 = √(2ν) Σ Aᵢ(x)ΔBⁱ + b(t, x)dt``, predicts ``x̃ = exp(x, δ1)``,
evaluates the same increment ``δ2`` at ``x̃`` and time ``t + dt``, transports
it back to ``x`` and moves along ``δ = (δ1 + τ⁻¹δ2)/2`` with the exact
exponential map and parallel transport. :attr:`Scheme.PROJECTED_EULER` adds
``δ1`` in ambient coordinates and projects back onto the manifold.
"""

from __future__ import annotations

import enum
import logging
import math
from typing import Callable, Optional, Tuple

import attr
import numpy as np

from .errors import InputError, NumericalAbort
from .frame_bundle import (Frame, orthonormalize, scalarize_vectors,
                           transport_frames)
from .geometry import Manifold
from .rng import CounterRNG

log = logging.getLogger('worker.sde')

TimeSampler = Callable[[float, np.ndarray], np.ndarray]


class Scheme(enum.Enum):
    EXACT_GEODESIC_HEUN = 'exact-geodesic-heun'
    PROJECTED_EULER = 'projected-euler'


def _positive(instance, attribute, value):
    if not value > 0:
        raise InputError(f'{attribute.name} must be positive, got {value}')


def _non_negative(instance, attribute, value):
    if value < 0:
        raise InputError(f'{attribute.name} must be non-negative, got {value}')


@attr.s(kw_only=True, frozen=True)
class NoiseSpec:
    k: int = attr.ib(converter=int, validator=_positive)
    dt: float = attr.ib(converter=float, validator=_positive)
    n_steps: int = attr.ib(converter=int, validator=_non_negative)
    seed: int = attr.ib(converter=int, validator=_non_negative)
    scheme: Scheme = attr.ib(default=Scheme.EXACT_GEODESIC_HEUN, converter=Scheme)
    key: Tuple[int, ...] = attr.ib(default=(), converter=tuple)

    @classmethod
    def over(cls, horizon: float, dt: float, **kwargs) -> NoiseSpec:
        """Cover ``[0, horizon]`` with the smallest number of steps no longer than dt."""
        if horizon < 0:
            raise InputError(f'horizon must be non-negative, got {horizon}')
        if horizon == 0:
            return cls(dt=dt, n_steps=0, **kwargs)
        n_steps = max(1, math.ceil(horizon / dt - 1e-9))
        return cls(dt=horizon / n_steps, n_steps=n_steps, **kwargs)

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    @property
    def rng(self) -> CounterRNG:
        return CounterRNG(seed=self.seed, key=self.key)

    def increments(self, step: int, n_paths: int) -> np.ndarray:
        return math.sqrt(self.dt) * self.rng.normals(step, n_paths, self.k)


@attr.s(kw_only=True, frozen=True, eq=False)
class PathEnsemble:
    """Frame-bundle trajectories of one initial frame.

    ``points``, ``frames`` and ``increments`` are kept only for recorded
    ensembles (time on axis 0, paths on axis 1). ``source_integral`` holds the
    left-rectangle integral of the scalarized source, one coefficient vector
    per path.
    """

    manifold: Manifold = attr.ib()
    initial: Frame = attr.ib()
    nu: float = attr.ib()
    noise: NoiseSpec = attr.ib()
    t0: float = attr.ib()
    n_paths: int = attr.ib()
    final_points: np.ndarray = attr.ib(repr=False)
    final_frames: np.ndarray = attr.ib(repr=False)
    source_integral: np.ndarray = attr.ib(repr=False)
    points: Optional[np.ndarray] = attr.ib(default=None, repr=False)
    frames: Optional[np.ndarray] = attr.ib(default=None, repr=False)
    increments: Optional[np.ndarray] = attr.ib(default=None, repr=False)

    @property
    def recorded(self) -> bool:
        return self.points is not None

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.noise.dt * np.arange(self.noise.n_steps + 1)

    @property
    def dt(self) -> float:
        return self.noise.dt


def _checked(values, what, step):
    values = np.asarray(values, dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        path = int(np.argwhere(bad.reshape(bad.shape[0], -1).any(axis=1))[0, 0])
        raise NumericalAbort(f'Non-finite {what} at step {step}, path {path}', path=path, step=step)
    return values


def _noise_increment(manifold: Manifold, x, dB, nu):
    return math.sqrt(2 * nu) * np.einsum('...k,...kc->...c', dB, manifold.embedding_fields(x))


def _increment(manifold, x, dB, t, dt, nu, drift, step):
    delta = _noise_increment(manifold, x, dB, nu)
    if drift is not None:
        b = drift(t, x)
        if b is not None:
            delta = delta + dt * _checked(b, 'drift', step)
    return delta


def _heun_direction(manifold, x, dB, t, dt, nu, drift, step):
    d1 = _increment(manifold, x, dB, t, dt, nu, drift, step)
    predicted = manifold.exp(x, d1)
    d2 = _increment(manifold, predicted, dB, t + dt, dt, nu, drift, step)
    return d1, predicted, 0.5 * (d1 + manifold.inverse_transport(x, d1, d2))


def _step(manifold, scheme, x, frames, dB, t, dt, nu, drift, step):
    if scheme is Scheme.EXACT_GEODESIC_HEUN:
        _, _, delta = _heun_direction(manifold, x, dB, t, dt, nu, drift, step)
        return transport_frames(manifold, x, frames, delta)
    delta = _increment(manifold, x, dB, t, dt, nu, drift, step)
    new_x = manifold.normalize_point(x + delta)
    return new_x, orthonormalize(manifold, new_x, frames)


def simulate_forward(
    u0: Frame, drift: Optional[TimeSampler], nu: float, noise: NoiseSpec, *,
    n_paths: int, t0: float = 0.0, source: Optional[TimeSampler] = None,
    record: bool = True,
) -> PathEnsemble:
    """Simulate ``n_paths`` trajectories started at frame ``u0`` at time ``t0``.

    With ``source`` given, the transported source integral is accumulated on
    the fly, so unrecorded ensembles never hold the full trajectory.
    """
    manifold = u0.manifold
    if nu < 0:
        raise InputError(f'nu must be non-negative, got {nu}')
    if noise.k != manifold.noise_count:
        raise InputError(f'{manifold.name} is driven by {manifold.noise_count} noise channels, got k={noise.k}')
    if n_paths < 1:
        raise InputError('n_paths must be positive')

    n_steps, dt = noise.n_steps, noise.dt
    log.debug(f'Simulating {n_paths} paths over {n_steps} steps of {dt:.3g} on {manifold.name}')
    x = np.broadcast_to(u0.base.coords, (n_paths, manifold.coord_dim)).copy()
    frames = np.broadcast_to(u0.basis, (n_paths,) + u0.basis.shape).copy()
    integral = np.zeros((n_paths, manifold.dim))

    if record:
        points = np.empty((n_steps + 1,) + x.shape)
        stored_frames = np.empty((n_steps + 1,) + frames.shape)
        increments = np.empty((n_steps, n_paths, noise.k))
        points[0], stored_frames[0] = x, frames

    for j in range(n_steps):
        t = t0 + j * dt
        dB = noise.increments(j, n_paths)
        if source is not None:
            integral += dt * scalarize_vectors(frames, _checked(source(t, x), 'source', j))
        x, frames = _step(manifold, noise.scheme, x, frames, dB, t, dt, nu, drift, j)
        if record:
            points[j + 1], stored_frames[j + 1], increments[j] = x, frames, dB

    _checked(x, 'position', n_steps)
    ensemble = PathEnsemble(
        manifold=manifold, initial=u0, nu=nu, noise=noise, t0=t0, n_paths=n_paths,
        final_points=x, final_frames=frames, source_integral=integral,
    )
    if record:
        ensemble = attr.evolve(ensemble, points=points, frames=stored_frames, increments=increments)
    return ensemble


def accumulate_transported_source(ens: PathEnsemble, G: Optional[TimeSampler]) -> PathEnsemble:
    """Left-rectangle integral of S(G(t))(U_t) along a recorded ensemble."""
    if not ens.recorded:
        raise InputError('Source accumulation needs a recorded ensemble')
    integral = np.zeros((ens.n_paths, ens.manifold.dim))
    if G is not None:
        dt = ens.dt
        for j in range(ens.noise.n_steps):
            t = ens.t0 + j * dt
            integral += dt * scalarize_vectors(ens.frames[j], _checked(G(t, ens.points[j]), 'source', j))
    return attr.evolve(ens, source_integral=integral)


@attr.s(kw_only=True, frozen=True, eq=False)
class VariationalState:
    """Tangent flow R along each path, one direction per embedding field.

    ``vectors`` has shape (n_steps + 1, n_paths, k, tangent_dim); direction
    ``i`` starts at A_i(x₀).
    """

    times: np.ndarray = attr.ib(repr=False)
    vectors: np.ndarray = attr.ib(repr=False)

    @property
    def final(self) -> np.ndarray:
        return self.vectors[-1]

    def mean_square_norm(self) -> np.ndarray:
        """E|R_t|² per time and direction."""
        return np.mean(np.sum(self.vectors ** 2, axis=-1), axis=1)


def _flat_sampler(drift, t, shape):
    def sampler(points):
        flat = np.asarray(points).reshape(-1, shape[-1])
        values = drift(t, flat)
        if values is None:
            return np.zeros_like(flat)
        return np.asarray(values).reshape(points.shape[:-1] + (-1,))
    return sampler


def _variation(manifold, x, r, dB, t, dt, nu, drift):
    """√(2ν) Σ ∇_R A_m ΔBᵐ + ∇_R b dt at points x, directions on axis -2."""
    out = math.sqrt(2 * nu) * np.einsum('...m,...mc->...c', dB, manifold.embedding_field_derivatives(x, r))
    if drift is not None:
        out = out + dt * manifold.covariant_derivative(_flat_sampler(drift, t, x.shape), x, r)
    return out


def simulate_variational(ens: PathEnsemble, nu: float, drift: Optional[TimeSampler]) -> VariationalState:
    """Integrate the tangent flow R along a recorded ensemble with its own increments.

    The Heun scheme integrates the covariant Stratonovich equation
    ``DR = √(2ν) Σ ∇_R Aₘ∘dBᵐ + ∇_R b dt`` with the same predictor as the base
    path; on the torus this is the exact linearization of the base step.
    Projected Euler integrates the Itô form with the ``-ν Ric♯R dt`` term.
    """
    if not ens.recorded:
        raise InputError('The variational flow needs a recorded ensemble')
    manifold = ens.manifold
    n_steps, dt = ens.noise.n_steps, ens.dt
    k = manifold.noise_count

    x0 = ens.points[0]
    r = manifold.embedding_fields(x0)
    vectors = np.empty((n_steps + 1,) + r.shape)
    vectors[0] = r

    for j in range(n_steps):
        t = ens.t0 + j * dt
        x, dB = ens.points[j], ens.increments[j]
        xb = np.broadcast_to(x[:, None, :], r.shape[:-1] + (manifold.coord_dim,))
        dBb = np.broadcast_to(dB[:, None, :], r.shape[:-1] + (k,))
        v1 = _variation(manifold, xb, r, dBb, t, dt, nu, drift)
        if ens.noise.scheme is Scheme.EXACT_GEODESIC_HEUN:
            d1, predicted, delta = _heun_direction(manifold, x, dB, t, dt, nu, drift, j)
            d1b = d1[:, None, :]
            pb = np.broadcast_to(predicted[:, None, :], xb.shape)
            r_pred = manifold.transport(xb, d1b, r + v1)
            v2 = manifold.inverse_transport(xb, d1b, _variation(manifold, pb, r_pred, dBb, t + dt, dt, nu, drift))
            r = manifold.transport(xb, delta[:, None, :], r + 0.5 * (v1 + v2))
        else:
            r = r + v1 - nu * dt * manifold.ricci(xb, r)
        r = manifold.project_tangent(ens.points[j + 1][:, None, :], r)
        vectors[j + 1] = r

    return VariationalState(times=ens.times, vectors=vectors)


@attr.s(kw_only=True, frozen=True)
class EstimateReport:
    """A Monte-Carlo estimate against its expected value."""

    label: str = attr.ib(default='')
    estimate: float = attr.ib(converter=float)
    expected: float = attr.ib(converter=float)
    stderr: float = attr.ib(converter=float)
    n_paths: int = attr.ib(converter=int)

    @property
    def error(self) -> float:
        return abs(self.estimate - self.expected)

    @property
    def relative_error(self) -> float:
        return self.error / abs(self.expected) if self.expected else self.error

    def within(self, n_sigma: float, floor: float = 0.0) -> bool:
        return self.error <= n_sigma * self.stderr + floor

    def for_json(self):
        return {**attr.asdict(self), 'error': self.error, 'relative_error': self.relative_error}


def _mean_and_stderr(values):
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    std = values.std(axis=0, ddof=1) if n > 1 else np.zeros(values.shape[1:])
    return values.mean(axis=0), std / math.sqrt(n)


def generator_residual(
    u0: Frame, f: Callable, expected: float, *, nu: float, dt: float, n_paths: int,
    seed: int, drift: Optional[TimeSampler] = None, scheme=Scheme.EXACT_GEODESIC_HEUN,
    label='',
) -> EstimateReport:
    """Compare (E f(X_dt) - f(x))/dt with the generator value supplied by the caller."""
    noise = NoiseSpec(k=u0.manifold.noise_count, dt=dt, n_steps=1, seed=seed, scheme=scheme)
    ens = simulate_forward(u0, drift, nu, noise, n_paths=n_paths, record=False)
    values = (np.asarray(f(ens.final_points)) - float(f(u0.base.coords[None, :])[0])) / dt
    mean, stderr = _mean_and_stderr(values)
    return EstimateReport(label=label, estimate=mean, expected=expected, stderr=stderr, n_paths=n_paths)


def coordinate_decay(
    u0: Frame, *, nu: float, t: float, dt: float, n_paths: int, seed: int,
    scheme=Scheme.EXACT_GEODESIC_HEUN,
) -> list:
    """E[xᵢ(X_t)] against e^{-2νt} xᵢ(x₀) for the ambient coordinates of the sphere."""
    manifold = u0.manifold
    if manifold.curvature != 1.0:
        raise InputError('Coordinate decay is a sphere diagnostic')
    noise = NoiseSpec.over(t, dt, k=manifold.noise_count, seed=seed, scheme=scheme)
    ens = simulate_forward(u0, None, nu, noise, n_paths=n_paths, record=False)
    mean, stderr = _mean_and_stderr(ens.final_points)
    expected = math.exp(-2 * nu * t) * u0.base.coords
    return [
        EstimateReport(label=f'x{i + 1}', estimate=mean[i], expected=expected[i],
                       stderr=stderr[i], n_paths=n_paths)
        for i in range(3)
    ]


def ergodic_average(
    u0: Frame, f: Callable, space_average: float, *, nu: float, t: float, dt: float,
    n_paths: int, seed: int, drift: Optional[TimeSampler] = None,
    scheme=Scheme.EXACT_GEODESIC_HEUN,
) -> EstimateReport:
    """E[f(X_t)] against the normalized space average of f."""
    noise = NoiseSpec.over(t, dt, k=u0.manifold.noise_count, seed=seed, scheme=scheme)
    ens = simulate_forward(u0, drift, nu, noise, n_paths=n_paths, record=False)
    mean, stderr = _mean_and_stderr(f(ens.final_points))
    return EstimateReport(label='ergodic', estimate=mean, expected=space_average,
                          stderr=stderr, n_paths=n_paths)
