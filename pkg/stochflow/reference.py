"""Exact and classical reference solutions.

Everything here is computed without the stochastic machinery: closed-form
solutions on both manifolds and a pseudo-spectral vorticity solver on the
torus. Times are physical (initial data at s = 0).
"""

from __future__ import annotations

import enum
import logging
import math
from typing import Optional, Sequence

import attr
import numpy as np

from .errors import InputError, NumericalAbort
from .fields import TimeField, VectorFieldSpec, divergence_norm, l2_norm
from .fields.spectral import default_resolution, torus_basis
from .geometry import SPHERE, TORUS, Manifold, Point, TangentVector, get_manifold

log = logging.getLogger('reference.spectral')

CFL_LIMIT = 1.0
# stability radius of classical RK4 on the negative real axis
RK4_DIFFUSION_LIMIT = 2.78
DIVERGENCE_FREE_TOLERANCE = 1e-8


class Family(enum.Enum):
    TAYLOR_GREEN = 'taylor-green'
    SPHERE_KILLING_BOCHNER = 'sphere-killing-bochner'
    SPHERE_KILLING_HODGE = 'sphere-killing-hodge'
    TORUS_HEAT_MODE = 'torus-heat-mode'


_MANIFOLD_OF = {
    Family.TAYLOR_GREEN: TORUS,
    Family.TORUS_HEAT_MODE: TORUS,
    Family.SPHERE_KILLING_BOCHNER: SPHERE,
    Family.SPHERE_KILLING_HODGE: SPHERE,
}


def _mode_tuple(value):
    m, n = (int(c) for c in value)
    if m == 0 and n == 0:
        raise InputError('Heat mode must be a non-constant Fourier mode')
    return m, n


@attr.s(kw_only=True, frozen=True)
class ExactSolution:
    """A closed-form decaying solution ``amplitude · e^{-rate·s} · shape(x)``."""

    family: Family = attr.ib(converter=Family)
    nu: float = attr.ib(converter=float)
    amplitude: float = attr.ib(default=1.0, converter=float)
    mode: tuple = attr.ib(default=(1, 0), converter=_mode_tuple)
    axis: tuple = attr.ib(default=(0.0, 0.0, 1.0), converter=lambda a: tuple(float(c) for c in a))

    @nu.validator
    def _check_nu(self, attribute, value):
        if value < 0:
            raise InputError(f'nu must be non-negative, got {value}')

    @property
    def manifold(self) -> Manifold:
        return _MANIFOLD_OF[self.family]

    @property
    def rate(self) -> float:
        if self.family is Family.TAYLOR_GREEN:
            return 2 * self.nu
        if self.family is Family.SPHERE_KILLING_BOCHNER:
            return self.nu
        if self.family is Family.SPHERE_KILLING_HODGE:
            return 2 * self.nu
        m, n = self.mode
        return self.nu * (m * m + n * n)

    def amplitude_at(self, s: float) -> float:
        return self.amplitude * math.exp(-self.rate * s)

    def shape(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if self.family is Family.TAYLOR_GREEN:
            x, y = points[..., 0], points[..., 1]
            return np.stack([np.sin(x) * np.cos(y), -np.cos(x) * np.sin(y)], axis=-1)
        if self.family is Family.TORUS_HEAT_MODE:
            # direction orthogonal to the wave vector, so (v·∇)v = 0
            m, n = self.mode
            direction = np.array([-n, m], dtype=float) / math.hypot(m, n)
            phase = m * points[..., 0] + n * points[..., 1]
            return np.cos(phase)[..., None] * direction
        return np.cross(np.asarray(self.axis), points)

    def velocity(self, s: float, points) -> np.ndarray:
        return self.amplitude_at(s) * self.shape(points)

    def spec(self, s: float, resolution: Optional[int] = None) -> VectorFieldSpec:
        if resolution is None:
            resolution = default_resolution(self.manifold)
        return VectorFieldSpec.from_function(self.manifold, resolution, lambda p: self.velocity(s, p))

    def time_field(self, times: Sequence[float], resolution: Optional[int] = None) -> TimeField:
        return TimeField.from_function(times, lambda s: self.spec(s, resolution))


def _point_on(p: Point, manifold: Manifold, what: str):
    if p.manifold is not manifold:
        raise InputError(f'{what} is defined on {manifold.name}, got a point on {p.manifold.name}')


def taylor_green(s: float, p: Point, nu: float, amplitude: float = 1.0) -> TangentVector:
    _point_on(p, TORUS, 'Taylor-Green flow')
    sol = ExactSolution(family=Family.TAYLOR_GREEN, nu=nu, amplitude=amplitude)
    return TangentVector(base=p, components=sol.velocity(s, p.coords))


def sphere_killing(s: float, p: Point, nu: float, mode='bochner',
                   axis=(0.0, 0.0, 1.0), amplitude: float = 1.0) -> TangentVector:
    _point_on(p, SPHERE, 'The Killing solution')
    family = {'bochner': Family.SPHERE_KILLING_BOCHNER,
              'hodge': Family.SPHERE_KILLING_HODGE}.get(getattr(mode, 'value', mode))
    if family is None:
        raise InputError(f'Unknown Laplacian mode {mode!r}')
    sol = ExactSolution(family=family, nu=nu, amplitude=amplitude, axis=axis)
    return TangentVector(base=p, components=sol.velocity(s, p.coords))


def torus_heat_mode(s: float, p: Point, nu: float, mode=(1, 0), amplitude: float = 1.0) -> TangentVector:
    _point_on(p, TORUS, 'The heat mode')
    sol = ExactSolution(family=Family.TORUS_HEAT_MODE, nu=nu, amplitude=amplitude, mode=mode)
    return TangentVector(base=p, components=sol.velocity(s, p.coords))


class _SpectralGrid:
    """Full n×n FFT wavenumbers with the 2/3 dealiasing mask."""

    def __init__(self, n: int):
        self.n = n
        k = np.fft.fftfreq(n, 1.0 / n)
        self.kx, self.ky = np.meshgrid(k, k, indexing='ij')
        self.k2 = self.kx ** 2 + self.ky ** 2
        self.inv_k2 = np.where(self.k2 > 0, 1.0 / np.where(self.k2 > 0, self.k2, 1.0), 0.0)
        cutoff = n / 3.0
        self.mask = (np.abs(self.kx) < cutoff) & (np.abs(self.ky) < cutoff)
        self.dx = 2 * np.pi / n

    def velocity(self, w_hat, mean):
        psi_hat = -w_hat * self.inv_k2
        vx = np.real(np.fft.ifft2(-1j * self.ky * psi_hat)) + mean[0]
        vy = np.real(np.fft.ifft2(1j * self.kx * psi_hat)) + mean[1]
        return vx, vy


def vorticity_to_velocity(w_hat, mean=(0.0, 0.0)):
    """Velocity grid values from vorticity spectrum ω̂ on an n×n FFT grid.

    ψ solves Δψ = ω and v = (-∂yψ, ∂xψ); ``mean`` is the k = 0 velocity,
    which the vorticity does not see.
    """
    w_hat = np.asarray(w_hat)
    return _SpectralGrid(w_hat.shape[-1]).velocity(w_hat, mean)


def _to_spec(grid: _SpectralGrid, w_hat, mean, K) -> VectorFieldSpec:
    vx, vy = grid.velocity(w_hat, mean)
    basis = torus_basis(K)
    coeffs, _ = basis.analyze(np.stack([vx, vy]))
    return VectorFieldSpec(manifold=TORUS, resolution=K, data=basis.symmetrize(coeffs))


def torus_spectral_ns(v0: VectorFieldSpec, nu: float, s_end: float, dt: float,
                      times: Optional[Sequence[float]] = None, n: Optional[int] = None) -> TimeField:
    """Classical 2D Navier-Stokes in vorticity form, RK4 in time, 2/3 dealiased.

    Returns the velocity at ``times`` (default ``[0, s_end]``) truncated to the
    resolution of ``v0``. The CFL number and the diffusive RK4 limit are
    checked every step; violations abort.
    """
    if v0.manifold is not TORUS:
        raise InputError('The spectral reference solver runs on the torus only')
    if nu < 0 or s_end < 0 or dt <= 0:
        raise InputError('Spectral solver needs nu >= 0, s_end >= 0 and dt > 0')
    defect = divergence_norm(v0)
    if defect > DIVERGENCE_FREE_TOLERANCE:
        raise InputError(f'Initial velocity is not divergence-free: |div v0| = {defect:.3e}')
    times = np.array(sorted({0.0, float(s_end)} if times is None else {float(t) for t in times}))
    if times[0] < 0 or times[-1] > s_end + 1e-12:
        raise InputError(f'Output times must lie in [0, {s_end}]')

    K = v0.resolution
    basis = torus_basis(K)
    grid = _SpectralGrid(n or basis.dense_n)
    if grid.n < basis.size:
        raise InputError(f'A {grid.n}x{grid.n} grid cannot hold K={K}')
    v = basis.synthesize(v0.data, grid.n)
    mean = v0.data[:, K, K].real.copy()
    w_hat = grid.mask * (1j * grid.kx * np.fft.fft2(v[1]) - 1j * grid.ky * np.fft.fft2(v[0]))

    k2_max = float(np.max(grid.k2 * grid.mask))
    if nu * k2_max * dt > RK4_DIFFUSION_LIMIT:
        raise NumericalAbort(f'Time step {dt:g} violates the diffusive RK4 limit',
                             dt=dt, nu=nu, k2_max=k2_max)

    def rhs(w_hat):
        vx, vy = grid.velocity(w_hat, mean)
        wx = np.real(np.fft.ifft2(1j * grid.kx * w_hat))
        wy = np.real(np.fft.ifft2(1j * grid.ky * w_hat))
        return -grid.mask * np.fft.fft2(vx * wx + vy * wy) - nu * grid.k2 * w_hat, vx, vy

    fields = []
    s = 0.0
    step = 0
    for target in times:
        substeps = max(int(math.ceil((target - s) / dt - 1e-9)), 0)
        h = (target - s) / substeps if substeps else 0.0
        for _ in range(substeps):
            k1, vx, vy = rhs(w_hat)
            cfl = h * (np.max(np.abs(vx)) + np.max(np.abs(vy))) / grid.dx
            if not np.isfinite(cfl) or cfl > CFL_LIMIT:
                raise NumericalAbort(f'CFL number {cfl:.3g} exceeds {CFL_LIMIT} at s={s:.4g}',
                                     step=step, time=s, cfl=float(cfl))
            k2, _, _ = rhs(w_hat + 0.5 * h * k1)
            k3, _, _ = rhs(w_hat + 0.5 * h * k2)
            k4, _, _ = rhs(w_hat + h * k3)
            w_hat = w_hat + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            s += h
            step += 1
        s = float(target)
        if not np.all(np.isfinite(w_hat)):
            raise NumericalAbort(f'Vorticity blew up before s={s:.4g}', step=step, time=s)
        fields.append(_to_spec(grid, w_hat, mean, K))
    log.debug(f'Spectral reference: {step} RK4 steps on a {grid.n}x{grid.n} grid up to s={s_end:g}')
    return TimeField(times=times, fields=fields)


def energy_history(v: TimeField) -> np.ndarray:
    """‖v(s)‖₂ at every node."""
    return np.array([l2_norm(f) for f in v.fields])


def exact_solution_for(manifold, nu: float, laplacian='bochner', amplitude: float = 1.0) -> ExactSolution:
    """The exact family used as initial data for validation runs on ``manifold``."""
    manifold = get_manifold(manifold)
    if manifold is TORUS:
        return ExactSolution(family=Family.TAYLOR_GREEN, nu=nu, amplitude=amplitude)
    family = {'bochner': Family.SPHERE_KILLING_BOCHNER,
              'hodge': Family.SPHERE_KILLING_HODGE}[getattr(laplacian, 'value', laplacian)]
    return ExactSolution(family=family, nu=nu, amplitude=amplitude)
