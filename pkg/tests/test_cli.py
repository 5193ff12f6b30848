import csv

import click
import pytest
import simplejson as json
from click.testing import CliRunner

from stochflow import settings
from stochflow.cli import FLAG_KEYS, cli, parse_assignments
from stochflow.docs import OptionsContributor, default_of, render_inline
from stochflow.errors import EXIT_OK, EXIT_USAGE, ConfigError


@pytest.fixture
def runner():
    return CliRunner()


def test_every_setting_is_documented():
    defaults = {k for k in dir(settings) if k.isupper()}
    assert defaults <= OptionsContributor.documented_keys()
    assert set(FLAG_KEYS.values()) <= defaults


def test_parse_assignments():
    assert parse_assignments(['nu=0.2', ' paths = 10']) == {'nu': '0.2', 'paths': ' 10'}
    with pytest.raises(ConfigError):
        parse_assignments(['nu'])
    with pytest.raises(ConfigError):
        parse_assignments(['=3'])


def test_options_manual(runner):
    result = runner.invoke(cli, ['options'])
    assert result.exit_code == 0
    assert 'PICARD_MAX_ITERS' in result.output
    assert 'SOBOLEV_P' in result.output
    assert '(default: 8)' in result.output


def test_validate_geometry_writes_artifacts(runner, tmp_path):
    out = tmp_path / 'geometry'
    result = runner.invoke(cli, ['validate-geometry', '--resolution', '2', '-s', 'geometry_samples=50',
                                 '-o', str(out)])
    assert result.exit_code == EXIT_OK, result.output
    manifest = json.loads((out / 'manifest.json').read_text())
    assert manifest['status'] == 'passed'
    assert manifest['exit_code'] == EXIT_OK
    assert manifest['subcommand'] == 'validate-geometry'
    assert manifest['provenance']['RESOLUTION'] == 'flag'
    assert manifest['provenance']['NU'] == 'default'
    assert {'checks.csv', 'metrics.json'} <= set(manifest['artifacts'])
    assert 'validate-geometry' in manifest['phases']
    with open(out / 'checks.csv', newline='') as f:
        rows = list(csv.DictReader(f))
    assert rows and all(row['passed'] == '1' for row in rows)
    metrics = json.loads((out / 'metrics.json').read_text())
    assert metrics['passed'] is True


def test_ns_solve_writes_snapshots_and_trace(runner, tmp_path):
    out = tmp_path / 'ns'
    result = runner.invoke(cli, ['ns-solve', '--resolution', '1', '--paths', '16', '--dt', '0.02', '--T', '0.05',
                                 '--tol', '0.5', '--deterministic-artifacts', '-o', str(out)])
    assert result.exit_code == EXIT_OK, result.output
    assert (out / 'trace-velocity.csv').exists()
    assert (out / 'divergence.csv').exists()
    assert sorted(p.name for p in (out / 'snapshots').glob('velocity-*.csv')) == [
        'velocity-000.csv', 'velocity-001.csv', 'velocity-002.csv']
    with open(out / 'trace-velocity.csv', newline='') as f:
        assert all(float(row['wall_ms']) == 0 for row in csv.DictReader(f))


def test_artifacts_do_not_depend_on_worker_count(runner, tmp_path):
    outputs = {}
    for workers in (1, 4, 16):
        out = tmp_path / f'workers-{workers}'
        result = runner.invoke(cli, ['ns-solve', '--resolution', '1', '--paths', '16', '--dt', '0.02', '--T', '0.05',
                                     '--tol', '0.5', '--workers', str(workers), '--deterministic-artifacts',
                                     '-o', str(out)])
        assert result.exit_code == EXIT_OK, result.output
        outputs[workers] = {p.relative_to(out): p.read_bytes() for p in sorted(out.rglob('*.csv'))}
    assert len(outputs[1]) >= 5
    assert outputs[4] == outputs[1]
    assert outputs[16] == outputs[1]


def test_bad_configuration_is_a_usage_error(runner, tmp_path):
    path = tmp_path / 'run.toml'
    path.write_text('nu = 0.1\nviscosity = 2\n')
    result = runner.invoke(cli, ['heat', '-c', str(path), '-o', str(tmp_path / 'out')])
    assert result.exit_code == EXIT_USAGE
    assert not (tmp_path / 'out' / 'manifest.json').exists()
    result = runner.invoke(cli, ['heat', '-s', 'paths', '-o', str(tmp_path / 'out')])
    assert result.exit_code == EXIT_USAGE


def test_input_error_aborts_with_manifest(runner, tmp_path):
    out = tmp_path / 'probe'
    result = runner.invoke(cli, ['contraction-probe', '--manifold', 'sphere2', '--resolution', '1', '-o', str(out)])
    assert result.exit_code == EXIT_USAGE
    manifest = json.loads((out / 'manifest.json').read_text())
    assert manifest['status'] == 'error'
    assert manifest['exit_code'] == EXIT_USAGE


def test_manual_helpers():
    assert default_of('PROBE_HORIZONS') == '0.05, 0.2, 0.8'
    assert default_of('OUTPUT') == 'unset'
    assert click.unstyle(render_inline('use `--nu` and ~-s~')) == 'use --nu and -s'
