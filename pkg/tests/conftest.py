import math

import pytest

from ripple_lab.degree_dist import DegreeDistribution, make_capped_soliton


def n_for(k, eps=0.1):
    return int(math.floor(k * (1.0 + eps) + 0.5))


@pytest.fixture(scope="session")
def cap():
    return make_capped_soliton()


@pytest.fixture(scope="session")
def quad():
    # Omega(x) = 0.3 x + 0.7 x^2; f(x) = 2/x exactly, gentle everywhere
    return DegreeDistribution([0.3, 0.7], name="quad-0.3")


@pytest.fixture(scope="session")
def mix13():
    # degree-3 mass keeps Omega''' nonzero so no curvature term degenerates
    return DegreeDistribution([0.1, 0.0, 0.9], name="mix13")
