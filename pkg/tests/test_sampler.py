import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snakegeom.rng import replica_rng
from snakegeom.sampler import (DurationMixture, SampleConfig, apply_scaling, assign_labels, duration_mass_above,
                               lattice_excursion, sample_durations, sample_excursion, sample_snake)
from snakegeom.snake import TreeIndex
from snakegeom.sparse_table import SparseTable
from snakegeom.stats import ks_two_sample

MIDPOINT_MEAN = math.sqrt(2.0 / math.pi)  # E e(1/2) = sqrt(8 t (1 - t) / pi) at t = 1/2


def test_config_validation():
    with pytest.raises(ValueError):
        SampleConfig(excursion="walk")
    with pytest.raises(ValueError):
        SampleConfig(grid_size=4)
    with pytest.raises(ValueError):
        SampleConfig(duration=0.0)


@pytest.mark.parametrize("method", ["bessel3", "vervaat", "lattice"])
def test_excursion_shape(method):
    e = sample_excursion(SampleConfig(256, 2.0, 0.0, 4, method))
    assert e.shape == (257,) and e[0] == 0.0 and e[-1] == 0.0
    assert np.all(e[1:-1] > 0) if method != "vervaat" else np.all(e >= 0)


def test_lattice_is_dyck_path():
    rng = np.random.default_rng(1)
    for n in (2, 8, 64, 500):
        e = lattice_excursion(rng, n)
        units = np.round(e / math.sqrt(1.0 / n)).astype(int)
        assert np.all(np.abs(np.diff(units)) == 1)
        assert units[0] == units[-1] == 0 and np.all(units[1:-1] > 0)
    with pytest.raises(ValueError):
        lattice_excursion(rng, 9)


@pytest.mark.parametrize("method", ["bessel3", "lattice"])
def test_midpoint_mean(method):
    reps = 4000
    mids = np.array([sample_excursion(SampleConfig(256, 1.0, 0.0, 0, method), replica_rng(11, k))[128]
                     for k in range(reps)])
    se = mids.std(ddof=1) / math.sqrt(reps)
    assert abs(mids.mean() - MIDPOINT_MEAN) < 3 * se


def test_scaling_of_max_matches_direct_sample():
    direct = [sample_excursion(SampleConfig(128, 4.0, 0.0, 0), replica_rng(1, k)).max() for k in range(800)]
    scaled = [2.0 * sample_excursion(SampleConfig(128, 1.0, 0.0, 0), replica_rng(2, k)).max() for k in range(800)]
    assert ks_two_sample(direct, scaled)[0]


def test_seed_exchange_same_law():
    a = [sample_snake(SampleConfig(64, seed=0), replica_rng(5, k)).w_star for k in range(800)]
    b = [sample_snake(SampleConfig(64, seed=0), replica_rng(6, k)).w_star for k in range(800)]
    assert ks_two_sample(a, b)[0]


def test_scaling_exact():
    snake = sample_snake(SampleConfig(128, 1.0, 0.5, 3))
    big = apply_scaling(snake, 4.0)
    assert big.sigma == 16 * snake.sigma
    assert big.w_star == 2 * snake.w_star
    back = apply_scaling(big, 0.25)
    assert np.array_equal(back.tip, snake.tip) and np.array_equal(back.lifetime, snake.lifetime)
    assert apply_scaling(snake, 1) is snake
    with pytest.raises(ValueError):
        apply_scaling(snake, -1.0)


@given(st.integers(0, 10 ** 6), st.sampled_from([1.0, 4.0, 16.0, 0.25]))
@settings(max_examples=25, deadline=None)
def test_scaling_minimum_property(seed, lam):
    snake = sample_snake(SampleConfig(32, seed=seed))
    assert apply_scaling(snake, lam).w_star == math.sqrt(lam) * snake.w_star


def test_label_variance_and_covariance():
    zeta = sample_excursion(SampleConfig(128, seed=2))
    labels = assign_labels(zeta, 0.0, seed=3, replicas=6000)
    table = SparseTable(zeta)
    rng = np.random.default_rng(4)
    for s, t in np.sort(rng.integers(0, 129, (10, 2)), axis=1):
        prod = labels[:, s] * labels[:, t]
        se = prod.std(ddof=1) / math.sqrt(prod.size)
        assert abs(prod.mean() - table.query(s, t)) < 3.5 * se + 1e-12


def test_equal_tree_points_bit_equal_labels():
    snake = sample_snake(SampleConfig(128, seed=8, excursion="lattice"))
    idx = TreeIndex(snake)
    for rep, members in idx.classes().items():
        assert np.all(snake.tip[members] == snake.tip[rep])


def test_durations_and_mixture():
    rng = np.random.default_rng(0)
    t_min = 2.0 ** -10
    d = sample_durations(rng, 200000, t_min)
    assert d.min() >= t_min
    frac = (d > 1.0).mean() * duration_mass_above(t_min)
    assert frac == pytest.approx(1 / math.sqrt(2 * math.pi), rel=0.02)
    mix = DurationMixture.geometric()
    total = mix.integrate(np.ones_like(mix.t_grid)) + mix.mass_above
    assert total == pytest.approx(float(duration_mass_above(mix.t_min)), rel=5e-3)  # midpoint rule in log t, 40 nodes
    with pytest.raises(ValueError):
        DurationMixture.geometric(t_min=1.0, t_max=0.5)
