import numpy as np
import pytest

from matchlab.geo import Node, Region, compute_catchments, line_region, random_euclidean_region
from matchlab.lowerbound import CounterexampleSpec, build_counterexample


@pytest.fixture
def line3():
    """u(0), v(10), z(20); banks at u and z; one person per node."""
    return line_region([0.0, 10.0, 20.0], [0, 2])


@pytest.fixture
def line3_served2():
    """Same line but N_u = N_z = 2 (the worked two-choice trace)."""
    return line_region([0.0, 10.0, 20.0], [0, 2], fi_pop=[2, 0, 2])


@pytest.fixture
def fig2_small():
    return build_counterexample(CounterexampleSpec(n=5, delta=0.1))


@pytest.fixture
def fig2_n50():
    return build_counterexample(CounterexampleSpec(n=50, delta=0.1))


@pytest.fixture
def euclid_region():
    return random_euclidean_region(20, 4, seed=12)


def single_bank_region():
    return Region(nodes=(Node(0, "only", 3, 3),), foodbanks=(0,), dist=np.zeros((1, 1)))


def acceptance_region():
    """The synthetic 5-bank instance used across the acceptance suite.

    Bank nodes are unpopulated so donation endpoints never sit exactly on a
    bank and driver-optimal route argmins are almost surely unique.
    """
    return random_euclidean_region(30, 5, seed=1, unpopulated_banks=True)


@pytest.fixture
def accept_region():
    return acceptance_region()


@pytest.fixture
def accept_catchment(accept_region):
    return compute_catchments(accept_region)
