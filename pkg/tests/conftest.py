import math

import pytest

from radstar.params import StarParams
from radstar.steady import build_steady_profile


@pytest.fixture(scope="session")
def n1_params():
    return StarParams(K=1.0, epsilon=0.5)


@pytest.fixture(scope="session")
def n1_profile(n1_params):
    """eps K = 1/2 star with K_bar = 1: u = sin(r)/r on [0, pi]."""
    return build_steady_profile(n1_params, S=math.sqrt(0.5))
