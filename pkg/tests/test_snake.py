import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snakegeom.snake import (DiscreteSnake, FinitePath, TreeIndex, d_circ, d_circ_row, d_tilde, d_tilde_circ,
                             interval_min_label, load_snake, save_snake, tree_distance)
from snakegeom.sampler import SampleConfig, sample_snake

from conftest import small_index


def test_finite_path():
    p = FinitePath(np.array([1.0, 2.0, 0.5]), 2.0)
    assert p.origin == 1.0 and p.tip == 0.5
    assert FinitePath(np.array([3.0]), 0.0).tip == 3.0
    with pytest.raises(ValueError):
        FinitePath(np.array([1.0, 2.0]), 0.0)
    with pytest.raises(ValueError):
        FinitePath(np.array([1.0]), -1.0)


def test_snake_validation():
    with pytest.raises(ValueError):
        DiscreteSnake(1.0, [0.0, 1.0, 0.5], [0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        DiscreteSnake(1.0, [0.0, 1.0, 0.0], [0.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        DiscreteSnake(0.0, [0.0, 0.0], [0.0, 0.0])
    s = DiscreteSnake.point(2.0)
    assert s.w_star == 2.0 and s.grid_size == 1


def test_toy_tree_distance(toy):
    idx = TreeIndex(toy)
    h = 0.125
    assert tree_distance(idx, 2, 4) == pytest.approx(2 * h)
    assert tree_distance(idx, 5, 5) == 0.0
    assert tree_distance(idx, 0, toy.grid_size) == 0.0
    # indices 5 and 6 sit at the same height with nothing lower between: one tree point
    assert tree_distance(idx, 5, 6) == 0.0
    assert idx.tree_rep[6] == idx.tree_rep[5]
    with pytest.raises(IndexError):
        tree_distance(idx, 0, 99)


def test_toy_interval_minima(toy):
    idx = TreeIndex(toy)
    n = toy.grid_size
    assert interval_min_label(idx, 3, 3) == toy.tip[3]
    assert interval_min_label(idx, 0, n) == toy.w_star
    expect = min(toy.tip[n - 2:].min(), toy.tip[:3].min())
    assert interval_min_label(idx, n - 2, 2) == expect


def brute_d_circ(tip, s, t):
    n = tip.size - 1

    def arc(a, b):
        return tip[a:b + 1].min() if a <= b else min(tip[a:].min(), tip[:b + 1].min())

    return tip[s] + tip[t] - 2 * max(arc(s, t), arc(t, s))


@given(st.integers(0, 10 ** 6), st.data())
@settings(max_examples=60, deadline=None)
def test_d_circ_against_scan(seed, data):
    snake = sample_snake(SampleConfig(32, seed=seed))
    idx = TreeIndex(snake)
    s = data.draw(st.integers(0, 32))
    t = data.draw(st.integers(0, 32))
    d = d_circ(idx, s, t)
    assert d == pytest.approx(brute_d_circ(snake.tip, s, t), abs=1e-12)
    assert d == pytest.approx(d_circ(idx, t, s), abs=0)
    assert d >= abs(snake.tip[s] - snake.tip[t]) - 1e-12
    lo, hi = min(s, t), max(s, t)
    assert d_tilde(snake, s, t) == pytest.approx(snake.tip[s] + snake.tip[t] - 2 * snake.tip[lo:hi + 1].min())
    assert d_tilde(idx, s, t) == pytest.approx(d_tilde(snake, s, t), abs=1e-12)
    assert d_tilde(idx, s, t) >= d - 1e-12


def test_d_circ_to_minimizer_and_rows():
    idx = small_index(128, 3, "bessel3")
    s_star = idx.s_star
    for s in range(0, 129, 7):
        assert d_circ(idx, s, s_star) == pytest.approx(idx.labels[s] - idx.w_star, abs=1e-12)
        assert d_circ(idx, s, s) == 0.0
        row = d_circ_row(idx, s)
        srow = d_circ_row(idx, s, slice_mode=True)
        for t in range(0, 129, 5):
            assert row[t] == pytest.approx(d_circ(idx, s, t), abs=1e-12)
            assert srow[t] == pytest.approx(d_tilde(idx, s, t), abs=1e-12)


def test_d_tilde_monotone_case():
    snake = DiscreteSnake(1.0, [0, 1, 2, 1, 0], [0.0, 0.1, 0.3, 0.6, 0.0])
    assert d_tilde(snake, 1, 3) == pytest.approx(0.5)


def test_d_tilde_circ_two_representatives():
    # tree point {1, 3} straddles the subtree at 2; target 4 sees only the second copy cheaply
    snake = DiscreteSnake(1.0, [0, 1, 2, 1, 2, 0], [0.0, 1.0, -1.0, 1.0, 1.5, 0.0])
    idx = TreeIndex(snake)
    assert idx.tree_rep[3] == idx.tree_rep[1]
    reps = [i for i in range(6) if idx.tree_rep[i] == idx.tree_rep[1]]
    best = d_tilde_circ(idx, reps, [4])
    assert best < d_tilde(idx, 1, 4)
    assert best == min(d_tilde(idx, a, 4) for a in reps)
    assert d_tilde_circ(idx, [2], [2]) == 0.0
    with pytest.raises(ValueError):
        d_tilde_circ(idx, [], [1])


def test_tree_index_invariants():
    idx = small_index(256, 5)
    assert tree_distance(idx, 0, idx.n) == 0.0
    assert idx.s_star == int(np.argmin(idx.labels))
    # equal tree points carry bit-equal labels
    for rep, members in idx.classes().items():
        assert np.all(idx.labels[members] == idx.labels[rep])
        assert all(tree_distance(idx, rep, m) == 0.0 for m in members)
    line = idx.ancestors(100)
    assert line[-1] == 0 and np.all(np.diff(idx.zeta[line]) <= 0)
    path = idx.path_at(100)
    assert path.tip == pytest.approx(idx.labels[100]) and path.origin == idx.labels[0]


@given(st.integers(0, 10 ** 6))
@settings(max_examples=30, deadline=None)
def test_tree_distance_four_point(seed):
    idx = small_index(64, seed, "bessel3")
    rng = np.random.default_rng(seed)
    for _ in range(20):
        a, b, c, d = rng.integers(0, 65, 4).tolist()
        ab, cd = tree_distance(idx, a, b), tree_distance(idx, c, d)
        ac, bd = tree_distance(idx, a, c), tree_distance(idx, b, d)
        ad, bc = tree_distance(idx, a, d), tree_distance(idx, b, c)
        sums = sorted([ab + cd, ac + bd, ad + bc])
        assert sums[2] - sums[1] <= 1e-12
        assert ab <= ac + tree_distance(idx, c, b) + 1e-12


@pytest.mark.parametrize("suffix", [".csv", ".snk"])
def test_round_trip(tmp_path, suffix):
    snake = sample_snake(SampleConfig(64, 0.7, 0.3, 9))
    path = tmp_path / ("s" + suffix)
    save_snake(snake, path)
    back = load_snake(path)
    assert back.sigma == snake.sigma and back.x == snake.x
    assert np.array_equal(back.lifetime, snake.lifetime) and np.array_equal(back.tip, snake.tip)


def test_csv_comments_skipped(tmp_path):
    snake = sample_snake(SampleConfig(16, seed=1))
    save_snake(snake, tmp_path / "c.csv", ["fingerprint=abc", "seed=1"])
    assert (tmp_path / "c.csv").read_text().startswith("# fingerprint=abc\n# seed=1\n")
    assert np.array_equal(load_snake(tmp_path / "c.csv").tip, snake.tip)
