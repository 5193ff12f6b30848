"""Run configuration: defaults < file < flags, with per-key provenance."""

from __future__ import annotations

import logging
import os
import re
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

import attr
import simplejson as json
from scrapy.settings import SETTINGS_PRIORITIES, BaseSettings

from . import settings as default_settings
from .docs import OptionsContributor
from .errors import ConfigError
from .fbsde import MonteCarloParams
from .geometry import TORUS, Manifold, get_manifold
from .ns_solver import LaplacianMode
from .sde_engine import Scheme
from .utils import timestamp_slug

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger('main.config')

SUBCOMMANDS = ('validate-geometry', 'heat', 'ns-solve', 'ns-validate', 'flow-diagnostics', 'contraction-probe')

OUTPUT_ENV = 'STOCHFLOW_OUTPUT'

PROVENANCE = {
    SETTINGS_PRIORITIES['default']: 'default',
    SETTINGS_PRIORITIES['project']: 'file',
    SETTINGS_PRIORITIES['cmdline']: 'flag',
}

DEFAULT_RESOLUTION = {'torus2': 7, 'sphere2': 3}

_TRUE = {'true', 'yes', 'on', '1'}
_FALSE = {'false', 'no', 'off', '0'}
_NONE = {'none', 'null', ''}


def _integer(value) -> int:
    if isinstance(value, bool):
        raise TypeError('expected an integer, got a boolean')
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if not value.is_integer():
            raise TypeError(f'expected an integer, got {value}')
        return int(value)
    if isinstance(value, str):
        return int(value.strip())
    raise TypeError(f'expected an integer, got {type(value).__name__}')


def _real(value) -> float:
    if isinstance(value, bool):
        raise TypeError('expected a number, got a boolean')
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        return float(value.strip())
    raise TypeError(f'expected a number, got {type(value).__name__}')


def _boolean(value) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().lower() in _TRUE | _FALSE:
        return value.strip().lower() in _TRUE
    raise TypeError(f'expected true or false, got {value!r}')


def _text(value) -> str:
    if not isinstance(value, str):
        raise TypeError(f'expected a string, got {type(value).__name__}')
    return value


def _reals(value) -> Tuple[float, ...]:
    if isinstance(value, str):
        value = [v for v in re.split(r'[,\s]+', value.strip('[] ')) if v]
    if not isinstance(value, (list, tuple)):
        raise TypeError(f'expected a list of numbers, got {type(value).__name__}')
    return tuple(_real(v) for v in value)


def _optional(coerce):
    def optional(value):
        if value is None or isinstance(value, str) and value.strip().lower() in _NONE:
            return None
        return coerce(value)
    return optional


def _log_level(value) -> int:
    if isinstance(value, str) and not value.strip().isdigit():
        level = logging.getLevelName(value.strip().upper())
        if not isinstance(level, int):
            raise ValueError(f'unknown log level {value!r}')
        return level
    return _integer(value)


def _positive(value):
    if value is not None and not value > 0:
        raise ValueError('must be positive')


def _non_negative(value):
    if value is not None and value < 0:
        raise ValueError('must be non-negative')


def _above_dimension(value):
    if not value > 2:
        raise ValueError('must exceed the manifold dimension 2')


def _at_least_two(value):
    if value < 2:
        raise ValueError('must be at least 2')


def _all_positive(values):
    if not values or any(not v > 0 for v in values):
        raise ValueError('must be a non-empty list of positive numbers')


_SCHEMA = {
    'MANIFOLD': (get_manifold, None),
    'NU': (_real, _positive),
    'T': (_real, _positive),
    'RESOLUTION': (_optional(_integer), _non_negative),
    'PATHS': (_integer, _positive),
    'DT': (_real, _positive),
    'SEED': (_integer, _non_negative),
    'SCHEME': (Scheme, None),
    'WORKERS': (_integer, _positive),
    'PICARD_MAX_ITERS': (_integer, _positive),
    'PICARD_TOL': (_real, _positive),
    'SOBOLEV_P': (_real, _above_dimension),
    'LAPLACIAN': (LaplacianMode, None),
    'TIME_NODES': (_integer, _at_least_two),
    'DRIVER_C': (_real, None),
    'GEOMETRY_SAMPLES': (_integer, _positive),
    'FD_EPSILON': (_real, _positive),
    'PROBE_HORIZONS': (_reals, _all_positive),
    'SPECTRAL_DT': (_real, _positive),
    'REFERENCE': (_boolean, None),
    'DETERMINISTIC_ARTIFACTS': (_optional(_boolean), None),
    'OUTPUT': (_optional(_text), None),
    'LOG_LEVEL': (_log_level, None),
    'LOG_FILE': (_optional(_text), None),
}

_ATTRIBUTES = {
    'T': 'horizon',
    'PICARD_MAX_ITERS': 'max_iters',
    'PICARD_TOL': 'tol',
}


def attribute_name(key: str) -> str:
    return _ATTRIBUTES.get(key, key.lower())


def _plain(value):
    if isinstance(value, Manifold):
        return value.name
    if hasattr(value, 'value') and not isinstance(value, (int, float, str)):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, tuple):
        return list(value)
    return value


@attr.s(kw_only=True, frozen=True)
class RunConfig:
    subcommand: str = attr.ib()
    manifold: Manifold = attr.ib()
    nu: float = attr.ib()
    horizon: float = attr.ib()
    resolution: int = attr.ib()
    paths: int = attr.ib()
    dt: float = attr.ib()
    seed: int = attr.ib()
    scheme: Scheme = attr.ib()
    workers: int = attr.ib()
    max_iters: int = attr.ib()
    tol: float = attr.ib()
    sobolev_p: float = attr.ib()
    laplacian: LaplacianMode = attr.ib()
    time_nodes: int = attr.ib()
    driver_c: float = attr.ib()
    geometry_samples: int = attr.ib()
    fd_epsilon: float = attr.ib()
    probe_horizons: Tuple[float, ...] = attr.ib()
    spectral_dt: float = attr.ib()
    reference: bool = attr.ib()
    deterministic_artifacts: bool = attr.ib()
    output: Path = attr.ib()
    log_level: int = attr.ib()
    log_file: Optional[str] = attr.ib()
    provenance: Dict[str, str] = attr.ib(factory=dict, eq=False, repr=False)
    source: Optional[Path] = attr.ib(default=None, eq=False)

    @property
    def mc(self) -> MonteCarloParams:
        return MonteCarloParams(paths=self.paths, dt=self.dt, seed=self.seed,
                                scheme=self.scheme, workers=self.workers)

    def settings(self) -> Dict[str, Any]:
        """Resolved settings by key, in a form :func:`load_config` accepts back."""
        return {key: _plain(getattr(self, attribute_name(key))) for key in _SCHEMA}

    def for_json(self):
        return {'subcommand': self.subcommand, 'source': self.source,
                'settings': self.settings(), 'provenance': dict(self.provenance)}


class PhysicsSettings(OptionsContributor, _doc_order=10):
    """
    Problem definition.
    """

    @staticmethod
    def _help_options():
        return {
            'MANIFOLD': """
            `torus2` (flat torus, period 2π) or `sphere2` (unit sphere).
            """,
            'NU': """
            Viscosity ν > 0.
            """,
            'T': """
            Horizon T > 0 in physical time; initial data sit at s = 0.
            """,
            'RESOLUTION': """
            Spectral truncation: Fourier modes |m|, |n| <= K on the torus, spherical
            harmonic degrees l <= L on the sphere. The Monte-Carlo grid is the fit grid
            of this resolution: (2K+2)² nodes or (L+2) x 2(L+2) nodes.
            Defaults to K = 7 (a 16x16 grid) and L = 3.
            """,
            'LAPLACIAN': """
            Viscosity operator: `bochner` (trace of the second covariant derivative)
            or `hodge` (Bochner minus Ricci). Identical on the torus.
            """,
            'TIME_NODES': """
            Number of uniform time nodes on [0, T] on which velocity fields are stored.
            """,
        }


class MonteCarloSettings(OptionsContributor, _doc_order=9):
    """
    Ensemble simulation.
    """

    @staticmethod
    def _help_options():
        return {
            'PATHS': """
            Paths per grid point.
            """,
            'DT': """
            Upper bound on the forward time step; each horizon is divided evenly.
            """,
            'SEED': """
            Root seed. All increments are keyed by (seed, stream, step), so results do
            not depend on WORKERS.
            """,
            'SCHEME': """
            `exact-geodesic-heun` (default) or `projected-euler`.
            """,
            'WORKERS': """
            Threads used to evaluate grid points. 1 runs inline.
            """,
        }


class PicardSettings(OptionsContributor, _doc_order=8):
    """
    Fixed-point iteration.
    """

    @staticmethod
    def _help_options():
        return {
            'PICARD_MAX_ITERS': """
            Iteration cap. Runs that do not reach the tolerance exit with code 3.
            """,
            'PICARD_TOL': """
            Tolerance on the sup-in-time W^{1,p} distance of consecutive iterates.
            """,
            'SOBOLEV_P': """
            Exponent p > 2 of the Sobolev norms.
            """,
            'DRIVER_C': """
            Coefficient c of the driver F(Y) = -cY exercised by `heat`.
            """,
        }


class DiagnosticsSettings(OptionsContributor, _doc_order=7):
    """
    Validation suites.
    """

    @staticmethod
    def _help_options():
        return {
            'GEOMETRY_SAMPLES': """
            Random points, vectors and frames drawn by `validate-geometry`.
            """,
            'FD_EPSILON': """
            Initial-point perturbation of the finite-difference Jacobian in `flow-diagnostics`.
            """,
            'PROBE_HORIZONS': """
            Horizons at which `contraction-probe` measures the contraction ratio.
            """,
            'SPECTRAL_DT': """
            RK4 step of the spectral reference solver.
            """,
            'REFERENCE': """
            Compare torus runs against the spectral reference solver.
            """,
        }


class OutputSettings(OptionsContributor, _doc_order=6):
    """
    Artifacts and logging.
    """

    @staticmethod
    def _help_options():
        return {
            'OUTPUT': f"""
            Directory for artifacts. Defaults to `${OUTPUT_ENV}` when set, otherwise
            `./runs/<subcommand>-<timestamp>`.
            """,
            'DETERMINISTIC_ARTIFACTS': """
            Zero the wall-time column of the Picard trace so that reruns are
            byte-identical. On by default for `ns-validate`.
            """,
            'LOG_LEVEL': """
            Console log level, as a number or a name such as `INFO`.
            """,
            'LOG_FILE': """
            Also write an uncolored log to this file.
            """,
        }


def _key_line(text: Optional[str], key: str) -> Optional[int]:
    if not text:
        return None
    pattern = re.compile(rf'^\s*["\']?{re.escape(key)}["\']?\s*[:=]', re.IGNORECASE | re.MULTILINE)
    match = pattern.search(text)
    return text.count('\n', 0, match.start()) + 1 if match else None


def _read_file(path: Path) -> Tuple[dict, str]:
    try:
        text = path.read_text(encoding='utf8')
    except OSError as e:
        raise ConfigError(f'Cannot read config file: {e.strerror}', source=path)
    if path.suffix == '.json':
        if not text.strip():
            return {}, text
        try:
            values = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f'Malformed JSON: {e.msg}', source=path, line=e.lineno)
        if not isinstance(values, dict):
            raise ConfigError('A JSON config file must hold an object', source=path, line=1)
        return values, text
    if path.suffix == '.toml':
        try:
            values = tomllib.loads(text)
        except tomllib.TOMLDecodeError as e:
            match = re.search(r'line (\d+)', str(e))
            raise ConfigError(f'Malformed TOML: {e}', source=path, line=int(match.group(1)) if match else None)
        return values, text
    raise ConfigError('Config files must end in .json or .toml', source=path)


def _normalize_key(key: str) -> str:
    return str(key).strip().upper().replace('-', '_')


def load_config(path=None, overrides: Optional[Mapping[str, Any]] = None,
                subcommand: str = 'ns-solve', environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Resolve a run configuration.

    ``overrides`` are command-line values keyed by setting name (any case);
    ``None`` values are ignored.
    """
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f'Unknown subcommand {subcommand!r}', field='subcommand')
    environ = os.environ if environ is None else environ

    settings = BaseSettings()
    settings.setmodule(default_settings, priority='default')

    text = None
    source = Path(path) if path else None
    if source:
        values, text = _read_file(source)
        for key, value in values.items():
            name = _normalize_key(key)
            if name not in _SCHEMA:
                raise ConfigError(f'Unknown key {key!r}', field=key, source=source, line=_key_line(text, key))
            settings.set(name, value, priority='project')
        log.debug(f'Read {len(values)} settings from {source}')

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        name = _normalize_key(key)
        if name not in _SCHEMA:
            raise ConfigError(f'Unknown key {key!r}', field=key, source='command line')
        settings.set(name, value, priority='cmdline')

    resolved, provenance = {}, {}
    for name, (coerce, check) in _SCHEMA.items():
        raw = settings[name]
        origin = PROVENANCE.get(settings.getpriority(name), 'flag')
        try:
            value = coerce(raw)
            if check is not None:
                check(value)
        except (TypeError, ValueError) as e:
            where = {'file': {'source': source, 'line': _key_line(text, name)},
                     'flag': {'source': 'command line'}}.get(origin, {'source': 'defaults'})
            raise ConfigError(f'Invalid value {raw!r}: {e}', field=name, **where)
        resolved[attribute_name(name)] = value
        provenance[name] = origin

    manifold = resolved['manifold']
    if resolved['resolution'] is None:
        resolved['resolution'] = DEFAULT_RESOLUTION[manifold.name]
    if manifold is TORUS and resolved['resolution'] < 1:
        raise ConfigError('The torus needs at least K = 1', field='RESOLUTION', source=source)
    if resolved['deterministic_artifacts'] is None:
        resolved['deterministic_artifacts'] = subcommand == 'ns-validate'
    if resolved['output'] is None:
        resolved['output'] = environ.get(OUTPUT_ENV) or str(Path('runs') / f'{subcommand}-{timestamp_slug()}')
    resolved['output'] = Path(resolved['output'])

    return RunConfig(subcommand=subcommand, provenance=provenance, source=source, **resolved)
