from pathlib import Path

import pytest

from stochflow.config import load_config
from stochflow.errors import EXIT_NUMERICAL, EXIT_USAGE, ConfigError, InputError, NumericalAbort, exit_code_for
from stochflow.geometry import SPHERE, TORUS
from stochflow.ns_solver import LaplacianMode
from stochflow.sde_engine import Scheme


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_defaults(output):
    cfg = load_config(subcommand='heat')
    assert cfg.manifold is TORUS
    assert cfg.resolution == 7
    assert cfg.nu == 0.1
    assert cfg.horizon == 0.1
    assert cfg.scheme is Scheme.EXACT_GEODESIC_HEUN
    assert cfg.laplacian is LaplacianMode.BOCHNER
    assert cfg.probe_horizons == (0.05, 0.2, 0.8)
    assert not cfg.deterministic_artifacts
    assert cfg.output == output
    assert set(cfg.provenance.values()) == {'default'}
    assert cfg.mc.paths == 20000


def test_default_resolution_follows_manifold(output):
    assert load_config(overrides={'manifold': 'sphere2'}).resolution == 3


def test_file_then_flags(tmp_path, output):
    path = write(tmp_path, 'run.toml', 'manifold = "sphere2"\nnu = 0.2\npaths = 500\n')
    cfg = load_config(path, overrides={'NU': '0.3', 'dt': None}, subcommand='ns-validate')
    assert cfg.manifold is SPHERE
    assert cfg.nu == 0.3
    assert cfg.paths == 500
    assert cfg.provenance['NU'] == 'flag'
    assert cfg.provenance['PATHS'] == 'file'
    assert cfg.provenance['DT'] == 'default'
    assert cfg.deterministic_artifacts
    assert cfg.source == path


def test_json_file_with_mixed_case_keys(tmp_path, output):
    path = write(tmp_path, 'run.json', '{"Picard-Max-Iters": 4, "probe_horizons": [0.1, 0.4], "T": 0.5}')
    cfg = load_config(path)
    assert cfg.max_iters == 4
    assert cfg.horizon == 0.5
    assert cfg.probe_horizons == (0.1, 0.4)


def test_unknown_key_reports_its_line(tmp_path, output):
    path = write(tmp_path, 'run.toml', 'nu = 0.2\n\nviscosity = 3\n')
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert info.value.field == 'viscosity'
    assert info.value.line == 3
    assert 'line 3' in str(info.value)


def test_invalid_value_reports_field_and_origin(tmp_path, output):
    path = write(tmp_path, 'run.json', '{\n  "nu": 0.2,\n  "paths": -5\n}')
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert info.value.field == 'PATHS'
    assert info.value.line == 3
    with pytest.raises(ConfigError) as info:
        load_config(overrides={'sobolev_p': '2'})
    assert info.value.source == 'command line'
    with pytest.raises(ConfigError):
        load_config(overrides={'paths': True})
    with pytest.raises(ConfigError):
        load_config(overrides={'scheme': 'leapfrog'})
    with pytest.raises(ConfigError):
        load_config(overrides={'bogus': 1})


def test_string_values_are_coerced(output):
    cfg = load_config(overrides={'paths': '64', 'reference': 'no', 'probe_horizons': '0.1, 0.2',
                                 'log_level': 'debug', 'resolution': 'none', 'laplacian': 'hodge'})
    assert cfg.paths == 64
    assert cfg.reference is False
    assert cfg.probe_horizons == (0.1, 0.2)
    assert cfg.log_level == 10
    assert cfg.resolution == 7
    assert cfg.laplacian is LaplacianMode.HODGE


def test_malformed_files(tmp_path, output):
    with pytest.raises(ConfigError) as info:
        load_config(write(tmp_path, 'bad.json', '{\n  "nu": \n}'))
    assert info.value.line == 3
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, 'bad.toml', 'nu = = 1\n'))
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, 'list.json', '[1, 2]'))
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, 'run.yaml', 'nu: 1\n'))
    with pytest.raises(ConfigError):
        load_config(tmp_path / 'missing.toml')


def test_torus_needs_a_mode(output):
    with pytest.raises(ConfigError):
        load_config(overrides={'resolution': 0})
    assert load_config(overrides={'manifold': 'sphere2', 'resolution': 0}).resolution == 0


def test_unknown_subcommand():
    with pytest.raises(ConfigError):
        load_config(subcommand='serve')


def test_output_location(tmp_path, monkeypatch):
    monkeypatch.delenv('STOCHFLOW_OUTPUT', raising=False)
    cfg = load_config(subcommand='heat')
    assert cfg.output.parent == Path('runs')
    assert cfg.output.name.startswith('heat-')
    cfg = load_config(subcommand='heat', environ={'STOCHFLOW_OUTPUT': str(tmp_path)})
    assert cfg.output == tmp_path
    assert load_config(overrides={'output': 'elsewhere'}).output == Path('elsewhere')


def test_settings_round_trip(tmp_path, output):
    cfg = load_config(overrides={'manifold': 'sphere2', 'probe_horizons': [0.1], 'laplacian': 'hodge'})
    settings = cfg.settings()
    assert settings['MANIFOLD'] == 'sphere2'
    assert settings['LAPLACIAN'] == 'hodge'
    again = load_config(overrides=settings)
    assert again == cfg
    assert cfg.for_json()['provenance']['MANIFOLD'] == 'flag'


def test_exit_codes():
    assert exit_code_for(ConfigError('bad')) == EXIT_USAGE
    assert exit_code_for(InputError('bad')) == EXIT_USAGE
    assert exit_code_for(NumericalAbort('nan', step=3)) == EXIT_NUMERICAL
    with pytest.raises(KeyError):
        exit_code_for(KeyError('other'))


@pytest.mark.parametrize('preset', sorted((Path(__file__).resolve().parents[1] / 'presets').iterdir()),
                         ids=lambda p: p.name)
def test_presets_load(preset, output):
    cfg = load_config(preset)
    assert cfg.source == preset
    assert 'file' in cfg.provenance.values()
