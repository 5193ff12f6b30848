import logging

import numpy as np
import pytest

from stochflow.fbsde import MonteCarloParams
from stochflow.geometry import SPHERE, TORUS


@pytest.fixture(params=[TORUS, SPHERE], ids=['torus2', 'sphere2'])
def manifold(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20201017)


@pytest.fixture
def small_mc():
    """Cheap Monte-Carlo settings; enough for shape and plumbing checks."""
    return MonteCarloParams(paths=64, dt=0.01, seed=3)


@pytest.fixture
def output(tmp_path, monkeypatch):
    out = tmp_path / 'run'
    monkeypatch.setenv('STOCHFLOW_OUTPUT', str(out))
    return out


@pytest.fixture
def caplog_warnings(caplog):
    caplog.set_level(logging.WARNING)
    return caplog
