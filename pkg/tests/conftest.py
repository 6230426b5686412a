import numpy as np
import pytest

from snakegeom.sampler import SampleConfig, sample_snake
from snakegeom.snake import DiscreteSnake, TreeIndex


def toy_snake():
    """Hand-made 8-step trajectory used by several oracle checks."""
    h = 0.125
    zeta = np.array([0, 1, 2, 1, 2, 1, 1, 0, 0], dtype=float) * h
    tip = np.array([0.0, 0.3, -0.2, 0.3, 0.5, 0.3, 0.3, 0.0, 0.0])
    return DiscreteSnake(1.0, zeta, tip, 0.0)


@pytest.fixture
def toy():
    return toy_snake()


def small_index(n=64, seed=0, excursion="lattice"):
    return TreeIndex(sample_snake(SampleConfig(n, 1.0, 0.0, seed, excursion)))
