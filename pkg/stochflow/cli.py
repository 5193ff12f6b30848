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

import logging
from functools import reduce
from pathlib import Path

import click

from . import _config_logging
from .config import OptionsContributor, load_config
from .diagnostics import CHECK_COLUMNS, SuiteResult, run_suite
from .errors import (EXIT_OK, EXIT_TOLERANCE, EXIT_USAGE, ConfigError, NonContractionError,
                     StochflowError, exit_code_for)
from .exporters import write_json, write_table
from .fields.snapshot import write_time_field
from .manifest import RunManifest
from .ns_solver import PicardTrace

log = logging.getLogger('main.cli')


# dedicated flag -> setting key
FLAG_KEYS = {
    'manifold': 'MANIFOLD',
    'nu': 'NU',
    'horizon': 'T',
    'resolution': 'RESOLUTION',
    'paths': 'PATHS',
    'dt': 'DT',
    'seed': 'SEED',
    'scheme': 'SCHEME',
    'workers': 'WORKERS',
    'laplacian': 'LAPLACIAN',
    'max_iters': 'PICARD_MAX_ITERS',
    'tol': 'PICARD_TOL',
    'sobolev_p': 'SOBOLEV_P',
    'reference': 'REFERENCE',
    'deterministic_artifacts': 'DETERMINISTIC_ARTIFACTS',
    'output': 'OUTPUT',
    'log_file': 'LOG_FILE',
}

RUN_OPTIONS = [
    click.option('-c', '--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
                 help='Run configuration file (`.json` or `.toml`).'),
    click.option('-s', '--set', 'assignments', multiple=True, metavar='KEY=VALUE',
                 help='Override any setting. Can be specified multiple times.'),
    click.option('--manifold', help='`torus2` or `sphere2`.'),
    click.option('--nu', type=float, help='Viscosity.'),
    click.option('--T', 'horizon', type=float, help='Time horizon.'),
    click.option('--resolution', type=int, help='Spectral truncation K (torus) or L (sphere).'),
    click.option('--paths', type=int, help='Monte-Carlo paths per grid point.'),
    click.option('--dt', type=float, help='SDE time step.'),
    click.option('--seed', type=int, help='Root seed of every noise stream.'),
    click.option('--scheme', help='`exact-geodesic-heun` or `projected-euler`.'),
    click.option('--workers', type=int, help='Threads for grid-point ensembles.'),
    click.option('--laplacian', help='`bochner` or `hodge`.'),
    click.option('--max-iters', type=int, help='Picard iteration cap.'),
    click.option('--tol', type=float, help='Picard stopping tolerance.'),
    click.option('--sobolev-p', type=float, help='Exponent p of the W^{1,p} distances.'),
    click.option('--reference/--no-reference', default=None,
                 help='Compare against the spectral reference solver (torus).'),
    click.option('--deterministic-artifacts/--no-deterministic-artifacts', default=None,
                 help='Zero the wall-time column of Picard traces.'),
    click.option('-o', '--output', type=click.Path(file_okay=False),
                 help='Output directory. Defaults to $STOCHFLOW_OUTPUT, then `runs/<subcommand>-<timestamp>`.'),
    click.option('--log-file', type=click.Path(dir_okay=False), help='Also write the log to this file.'),
]


def run_options(func):
    return reduce(lambda f, option: option(f), reversed(RUN_OPTIONS), func)


def parse_assignments(assignments):
    overrides = {}
    for item in assignments:
        key, sep, value = item.partition('=')
        if not sep or not key.strip():
            raise ConfigError(f'Expected KEY=VALUE, got {item!r}', field=item, source='command line')
        overrides[key.strip()] = value
    return overrides


@click.group()
@click.option('--debug', is_flag=True)
@click.pass_context
def cli(ctx, debug=False):
    level = logging.DEBUG if debug else logging.INFO
    _config_logging(level=level, style='debug' if debug else 'standard')
    ctx.ensure_object(dict)
    ctx.obj['DEBUG'] = debug


def write_trace(output: Path, label: str, trace: PicardTrace, deterministic: bool) -> Path:
    return write_table(output / f'trace-{label}.csv', PicardTrace.FIELDS, trace.rows(deterministic))


def write_artifacts(result: SuiteResult, cfg, manifest: RunManifest):
    out = cfg.output
    manifest.add_artifact(write_table(out / 'checks.csv', CHECK_COLUMNS, result.check_rows()))
    for name, (columns, rows) in result.tables.items():
        manifest.add_artifact(write_table(out / f'{name}.csv', columns, rows))
    for label, trace in result.traces.items():
        manifest.add_artifact(write_trace(out, label, trace, cfg.deterministic_artifacts))
    for name, tf in result.snapshots.items():
        tables, sidecars = write_time_field(out / 'snapshots', name, tf, subcommand=cfg.subcommand)
        for path in [*tables, *sidecars]:
            manifest.add_artifact(path)
    manifest.add_artifact(write_json(out / 'metrics.json', result))


def summarize(result: SuiteResult) -> dict:
    return {
        'suite': result.name,
        'passed': result.passed,
        'checks': {c.name: {'value': c.value, 'tolerance': c.tolerance, 'passed': c.passed}
                   for c in result.checks},
    }


def run(ctx: click.Context, subcommand: str, config_path=None, assignments=(), **flags) -> int:
    try:
        overrides = parse_assignments(assignments)
        overrides.update({FLAG_KEYS[k]: v for k, v in flags.items() if v is not None})
        cfg = load_config(config_path, overrides, subcommand=subcommand)
    except ConfigError as e:
        log.critical(str(e))
        return EXIT_USAGE

    kwargs = {'level': logging.DEBUG} if ctx.obj.get('DEBUG') else {}
    _config_logging(cfg, **kwargs)

    log.info(f'{subcommand} on {cfg.manifold.name} -> {cfg.output}')
    manifest = RunManifest(config=cfg)
    manifest.start()
    try:
        with manifest.phase(subcommand):
            result = run_suite(cfg)
        with manifest.phase('artifacts'):
            write_artifacts(result, cfg, manifest)
    except StochflowError as e:
        code = exit_code_for(e)
        log.critical(f'{type(e).__name__}: {e}')
        if isinstance(e, NonContractionError) and e.trace is not None:
            manifest.add_artifact(write_trace(cfg.output, 'aborted', e.trace, cfg.deterministic_artifacts))
            manifest.metrics = {'history': list(e.history), 'ratios': list(e.ratios)}
        manifest.finish('aborted' if code != EXIT_USAGE else 'error', code)
        return code
    except BaseException:
        manifest.finish('crashed', EXIT_TOLERANCE)
        raise

    manifest.metrics = summarize(result)
    code = EXIT_OK if result.passed else EXIT_TOLERANCE
    failed = [c.name for c in result.checks if not c.passed]
    if failed:
        log.error(f'{len(failed)} of {len(result.checks)} checks failed: {", ".join(failed)}')
    else:
        log.info(f'All {len(result.checks)} checks passed')
    manifest.finish('passed' if code == EXIT_OK else 'failed', code)
    return code


@cli.command()
@run_options
@click.pass_context
def validate_geometry(ctx, **kwargs):
    """
    Check the embedding identities, scalarization and holonomy.

    Samples random points and tangent vectors and checks the embedding-field
    energy and drift identities, projection idempotence, transport isometry,
    SO(2) equivariance of scalarization, the holonomy of a closed loop and the
    finite-difference oracles of the covariant derivative and divergence.
    """
    ctx.exit(run(ctx, 'validate-geometry', **kwargs))


@cli.command()
@run_options
@click.pass_context
def heat(ctx, **kwargs):
    """
    Solve the backward vector heat equation by Monte Carlo.

    Terminal data is a decaying eigenfield; the solution is compared with the
    closed form at every time node, then again with a linear-in-Y driver
    solved by Picard iteration.
    """
    ctx.exit(run(ctx, 'heat', **kwargs))


@cli.command()
@run_options
@click.pass_context
def ns_solve(ctx, **kwargs):
    """
    Solve Navier-Stokes by Picard iteration of the backward problem.

    Writes the Picard trace, velocity snapshots in physical time and the
    unprojected divergence of the fixed point.
    """
    ctx.exit(run(ctx, 'ns-solve', **kwargs))


@cli.command()
@run_options
@click.pass_context
def ns_validate(ctx, **kwargs):
    """
    Compare Navier-Stokes solutions with exact and reference solutions.

    \b
        torus2: Taylor-Green amplitude decay and the spectral reference solver.
        sphere2: decay exponents of a rotation field, Bochner against Hodge.
    """
    ctx.exit(run(ctx, 'ns-validate', **kwargs))


@cli.command()
@run_options
@click.pass_context
def flow_diagnostics(ctx, **kwargs):
    """
    Check the stochastic flow against its generator and its derivative flow.
    """
    ctx.exit(run(ctx, 'flow-diagnostics', **kwargs))


@cli.command()
@run_options
@click.pass_context
def contraction_probe(ctx, **kwargs):
    """
    Measure the Picard contraction ratio for each of `PROBE_HORIZONS`.
    """
    ctx.exit(run(ctx, 'contraction-probe', **kwargs))


@cli.command()
def options():
    """Show the manual of all run settings."""
    click.echo_via_pager(OptionsContributor.format_docs())
