"""Run manifests.

The manifest is written to ``<output>/manifest.json`` when a run starts
(status ``running``) and rewritten when it ends, with the exit code, phase
wall times, captured warnings and metric summaries.
"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, List, Optional

import attr

from .config import RunConfig
from .exporters import write_json
from .logger import SOLVER_LOGGERS
from .settings import __version__
from .utils import utcnow, watch_for_timing

log = logging.getLogger('main.manifest')

MANIFEST_NAME = 'manifest.json'


class WarningCollector(logging.Handler):
    """Keeps every WARNING-or-higher record of the solver logger trees."""

    def __init__(self, records: List[dict]):
        super().__init__(level=logging.WARNING)
        self.records = records

    def emit(self, record: logging.LogRecord):
        try:
            message = record.getMessage()
        except Exception:
            message = str(record.msg)
        self.records.append({'logger': record.name, 'level': record.levelname, 'message': message})


@attr.s(kw_only=True)
class RunManifest:
    config: RunConfig = attr.ib()
    version: str = attr.ib(default=__version__)
    started: Optional[str] = attr.ib(default=None)
    finished: Optional[str] = attr.ib(default=None)
    status: str = attr.ib(default='running')
    exit_code: Optional[int] = attr.ib(default=None)
    phases: Dict[str, float] = attr.ib(factory=dict)
    warnings: List[dict] = attr.ib(factory=list)
    metrics: dict = attr.ib(factory=dict)
    artifacts: List[str] = attr.ib(factory=list)

    _collector: Optional[WarningCollector] = attr.ib(default=None, init=False, repr=False)

    @property
    def path(self) -> Path:
        return self.config.output / MANIFEST_NAME

    def start(self):
        self.started = utcnow().isoformat()
        self._collector = WarningCollector(self.warnings)
        for name in SOLVER_LOGGERS:
            logging.getLogger(name).addHandler(self._collector)
        emit_manifest(self)

    def finish(self, status: str, exit_code: int):
        if self._collector is not None:
            for name in SOLVER_LOGGERS:
                logging.getLogger(name).removeHandler(self._collector)
            self._collector = None
        self.status = status
        self.exit_code = exit_code
        self.finished = utcnow().isoformat()
        emit_manifest(self)

    @contextmanager
    def phase(self, name: str):
        with watch_for_timing(name) as timing:
            yield timing
        self.phases[name] = timing.seconds

    def add_artifact(self, path: Path):
        path = Path(path)
        try:
            path = path.relative_to(self.config.output)
        except ValueError:
            pass
        self.artifacts.append(str(path))

    def for_json(self):
        return {
            'version': self.version,
            'subcommand': self.config.subcommand,
            'status': self.status,
            'exit_code': self.exit_code,
            'started': self.started,
            'finished': self.finished,
            'config': self.config.settings(),
            'provenance': dict(self.config.provenance),
            'config_file': self.config.source,
            'phases': dict(self.phases),
            'warnings': list(self.warnings),
            'metrics': self.metrics,
            'artifacts': list(self.artifacts),
        }


def emit_manifest(manifest: RunManifest) -> Path:
    path = write_json(manifest.path, manifest)
    log.debug(f'Manifest ({manifest.status}) written to {path}')
    return path
