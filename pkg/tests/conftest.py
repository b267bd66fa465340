import numpy as np
import pytest

from gmbua.penalties import GroupStructure


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture
def groups6():
    return GroupStructure(((0, 2), (2, 5), (5, 6)))


def random_groups(rng, q):
    """Random contiguous partition of q coordinates into 1..q groups."""
    cuts = np.sort(rng.choice(np.arange(1, q), size=rng.integers(0, q - 1), replace=False))
    edges = np.concatenate([[0], cuts, [q]])
    return GroupStructure(tuple(zip(edges[:-1], edges[1:])))
