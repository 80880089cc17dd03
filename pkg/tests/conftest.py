import numpy as np
import pytest

from navsim.config import load_config
from navsim.scenarios import build_map_eval_room, build_office
from navsim.world import NoiseConfig


@pytest.fixture(scope="session")
def config():
    return load_config(seed=0)


@pytest.fixture(scope="session")
def office():
    return build_office()


@pytest.fixture(scope="session")
def map_room():
    return build_map_eval_room()


@pytest.fixture
def noise_off():
    return NoiseConfig.disabled()


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))
