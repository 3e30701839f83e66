import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ruleguard.envs.gridpellets import GridPellets
from ruleguard.featurespace import build_decile_scheme
from ruleguard.synthetic import wall_avoidance_experience

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def wall_data():
    """Synthetic wall-avoidance experiences on the small layout plus a decile scheme."""
    env, q, traces, E = wall_avoidance_experience(20, seed=0)
    scheme = build_decile_scheme(E.states, env.schema)
    return env, q, traces, E, scheme


@pytest.fixture
def tiny_env():
    return GridPellets(layout="tiny")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
