import numpy as np
import pytest
from hypothesis import strategies as st

from ips_lab.problem import GroupedProblem, GroupEntry, ScoreDistribution


@pytest.fixture
def two_point():
    return ScoreDistribution([0.3, 0.9], [0.5, 0.5])


@pytest.fixture
def twin_pair(two_point):
    return GroupedProblem({"a": GroupEntry(0.5, two_point), "b": GroupEntry(0.5, two_point)})


def random_distribution(rng, n_max=12, interior=False, grid=None):
    n = int(rng.integers(1, n_max + 1))
    if grid:
        s = rng.integers(0 if not interior else 1, grid + (0 if interior else 1), size=n) / grid
    else:
        s = rng.uniform(1e-3, 1 - 1e-3, size=n) if interior else rng.uniform(size=n)
    m = rng.uniform(0.05, 1.0, size=n)
    return ScoreDistribution(s, m)


@st.composite
def distributions(draw, min_atoms=1, max_atoms=8, interior=False):
    n = draw(st.integers(min_atoms, max_atoms))
    lo, hi = (0.01, 0.99) if interior else (0.0, 1.0)
    s = draw(st.lists(st.floats(lo, hi, allow_nan=False), min_size=n, max_size=n))
    m = draw(st.lists(st.floats(0.01, 1.0, allow_nan=False), min_size=n, max_size=n))
    return ScoreDistribution(s, m)
