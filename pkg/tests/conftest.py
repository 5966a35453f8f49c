import numpy as np
import pytest

from snloc.design import two_block_params
from snloc.problem import ProblemInstance, build_adjacency, generate_instance


@pytest.fixture(scope="session")
def tiny_instance():
    """Two sensors on a path, one anchor, exact distances."""
    locs = np.array([[0.2, 0.3], [0.6, 0.7]])
    anchor = np.array([[0.5, 0.1]])
    d01 = float(np.linalg.norm(locs[0] - locs[1]))
    da0 = float(np.linalg.norm(locs[0] - anchor[0]))
    return ProblemInstance(
        d=2, n=2, m=1, anchors=anchor,
        sensor_neighbors=[[1], []], anchor_neighbors=[[0], []],
        dist_ss=[[d01], []], dist_sa=[[da0], []], truth=locs)


@pytest.fixture(scope="session")
def small_instance():
    return generate_instance(6, 2, 2, radius=1.2, max_degree=5,
                             noise_factor=0.05, seed=7)


@pytest.fixture(scope="session")
def small_params(small_instance):
    return two_block_params(build_adjacency(small_instance))


@pytest.fixture(scope="session")
def medium_instance():
    return generate_instance(10, 3, 2, radius=0.9, max_degree=7,
                             noise_factor=0.05, seed=11)


@pytest.fixture(scope="session")
def medium_params(medium_instance):
    return two_block_params(build_adjacency(medium_instance))


@pytest.fixture(scope="session")
def noiseless_instance():
    return generate_instance(8, 3, 2, radius=1.0, max_degree=7,
                             noise_factor=0.0, seed=5)
