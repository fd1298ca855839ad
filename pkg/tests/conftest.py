import numpy as np
import pytest

from ensemblerl import make_env
from ensemblerl.core import substream
from ensemblerl.policy import init_policy


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def pendulum():
    return make_env("pendulum")


@pytest.fixture
def hopper():
    return make_env("spring_hopper")


@pytest.fixture
def small_policy():
    """2-state 1-action policy with small hidden layers, for cheap tests."""
    return init_policy(2, 1, substream(7, 0), hidden=(8, 8))
