import numpy as np
import pytest

from hystera.config import parse_config
from hystera.constitutive import PlayMap, build_rho_tables


@pytest.fixture(scope="session")
def play0():
    """Unregularised play map for the default (unshifted) curve pair."""
    return PlayMap()


@pytest.fixture(scope="session")
def rho0(play0):
    return build_rho_tables(play0)


@pytest.fixture(scope="session")
def redis_cfg():
    return parse_config(preset="redistribution", run_id="redis")


@pytest.fixture(scope="session")
def redis_cs(redis_cfg):
    return redis_cfg.constitutive()


@pytest.fixture(scope="session")
def redis_run(redis_cfg):
    from hystera.presets import run_redistribution

    return run_redistribution(redis_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
