"""Field snapshots: one CSV line per sample-grid node plus a JSON sidecar."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import simplejson as json

from ..errors import InputError
from ..exporters import MappingCSVExporter, write_json
from ..geometry import SPHERE, TORUS, get_manifold
from .calculus import fit_field
from .specs import TimeField, VectorFieldSpec
from .spectral import sample_grid

COLUMNS = {
    TORUS: ('x', 'y', 'vx', 'vy'),
    SPHERE: ('lon', 'lat', 'x', 'y', 'z', 'vx', 'vy', 'vz'),
}


def snapshot_rows(field: VectorFieldSpec):
    grid = sample_grid(field.manifold, field.resolution)
    vectors = field.grid_values(grid)
    if field.manifold is TORUS:
        for (x, y), (vx, vy) in zip(grid.points, vectors):
            yield {'x': x, 'y': y, 'vx': vx, 'vy': vy}
        return
    lon = np.degrees(np.mod(grid.phi, 2 * np.pi))
    lat = 90.0 - np.degrees(grid.theta)
    for i, ((x, y, z), (vx, vy, vz)) in enumerate(zip(grid.points, vectors)):
        yield {'lon': lon[i], 'lat': lat[i], 'x': x, 'y': y, 'z': z, 'vx': vx, 'vy': vy, 'vz': vz}


def _sidecar(field: VectorFieldSpec, time: Optional[float], **extra):
    return {
        'manifold': field.manifold.kind.value,
        'resolution': field.resolution,
        'time': time,
        'columns': list(COLUMNS[field.manifold]),
        **extra,
    }


def write_snapshot(output: Path, name: str, field: VectorFieldSpec,
                   time: Optional[float] = None, **extra) -> Tuple[Path, Path]:
    output = Path(output)
    with MappingCSVExporter(COLUMNS[field.manifold], output, f'{name}.csv') as exporter:
        for row in snapshot_rows(field):
            exporter.write(row)
    sidecar = write_json(output / f'{name}.json', _sidecar(field, time, **extra))
    return output / f'{name}.csv', sidecar


def write_time_field(output: Path, name: str, tf: TimeField, **extra):
    """One snapshot per time node, named ``<name>-<node index>``."""
    output = Path(output)
    columns = COLUMNS[tf.manifold]
    paths = []
    with MappingCSVExporter(columns, output, f'{name}-%(node)03d.csv') as exporter:
        for node, (t, field) in enumerate(zip(tf.times, tf.fields)):
            for row in snapshot_rows(field):
                exporter.write({**row, 'node': node})
            paths.append(write_json(output / f'{name}-{node:03d}.json',
                                    _sidecar(field, float(t), node=node, **extra)))
    return exporter.written, paths


def read_snapshot(path: Path) -> Tuple[VectorFieldSpec, dict]:
    """Refit a snapshot written by :func:`write_snapshot`."""
    path = Path(path)
    with open(path.with_suffix('.json')) as f:
        meta = json.load(f)
    manifold = get_manifold(meta['manifold'])
    with open(path, newline='') as f:
        rows = list(csv.DictReader(f))
    if not rows or tuple(rows[0].keys()) != COLUMNS[manifold]:
        raise InputError(f'{path} is not a {manifold.name} snapshot')
    coords = ('x', 'y') if manifold is TORUS else ('x', 'y', 'z')
    vec = ('vx', 'vy') if manifold is TORUS else ('vx', 'vy', 'vz')
    points = np.array([[float(r[c]) for c in coords] for r in rows])
    vectors = np.array([[float(r[c]) for c in vec] for r in rows])
    return fit_field(points, vectors, manifold, meta['resolution']), meta
