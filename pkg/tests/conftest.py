import numpy as np
import pytest

from momentcal.predicates import All, GroupFamily
from momentcal.synthetic import random_box_family, random_grid, two_point


@pytest.fixture
def fam_all():
    return GroupFamily([("all", All())])


@pytest.fixture
def two_point_dist():
    return two_point()


def grid_case(seed, points=40, groups=8):
    rng = np.random.default_rng(seed)
    dist = random_grid(rng, points=points)
    fam = random_box_family(rng, 2, groups)
    return dist, fam


@pytest.fixture
def small_grid():
    return grid_case(0)
