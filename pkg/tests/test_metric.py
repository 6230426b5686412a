import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snakegeom.metric import (SLICE, SPHERE, GeodesicPath, MetricBudget, alignment_test, build_metric,
                              class_one_step, coalescence_point, floyd_warshall, geodesic_check,
                              label_neighbours, quotient_classes, simple_geodesic)
from snakegeom.snake import TreeIndex, d_circ

from conftest import small_index
from oracles import brute_classes, dense_chain_distance


@given(st.integers(0, 10 ** 6), st.sampled_from(["lattice", "bessel3"]), st.sampled_from([SPHERE, SLICE]))
@settings(max_examples=40, deadline=None)
def test_exact_against_dense_oracle(seed, excursion, mode):
    idx = small_index(48, seed, excursion)
    inst = build_metric(idx, mode=mode)
    ref_classes = brute_classes(idx.labels, idx.zeta, mode == SLICE)
    assert np.array_equal(inst.classes, ref_classes)
    ref = dense_chain_distance(idx.labels, idx.zeta, ref_classes, mode == SLICE)
    assert np.max(np.abs(inst.matrix() - ref)) <= 1e-12


def test_dense_build_agrees_with_neighbour_graph():
    idx = small_index(64, 2)
    a = build_metric(idx)
    b = build_metric(idx, budget=MetricBudget(dense=True))
    assert b.method == "dense" and np.allclose(a.matrix(), b.matrix(), atol=1e-12, rtol=0)
    with pytest.warns(RuntimeWarning):
        c = build_metric(idx, budget=MetricBudget(max_candidates=3))
    assert c.method == "dense"
    assert np.allclose(floyd_warshall(class_one_step(idx, a.classes)), a.matrix(), atol=1e-12, rtol=0)


def test_lattice_chains_beat_one_step():
    idx = small_index(512, 1)
    inst = build_metric(idx)
    rng = np.random.default_rng(0)
    gaps = [inst.one_step(s, t) - inst.dist(s, t) for s, t in rng.integers(0, 513, (300, 2))]
    assert max(gaps) > 0


@given(st.integers(0, 10 ** 6), st.sampled_from(["lattice", "bessel3"]))
@settings(max_examples=25, deadline=None)
def test_identity_and_sandwich(seed, excursion):
    idx = small_index(256, seed, excursion)
    inst = build_metric(idx)
    lab = idx.labels
    row = inst.row(inst.x_star)
    assert np.max(np.abs(row - (lab - idx.w_star))) <= 1e-12
    rng = np.random.default_rng(seed)
    for s, t in rng.integers(0, 257, (100, 2)):
        d = inst.dist(s, t)
        assert abs(lab[s] - lab[t]) <= d + 1e-12 and d <= d_circ(idx, s, t) + 1e-12
    sl = build_metric(idx, mode=SLICE)
    assert np.all(sl.row(0)[:] + 1e-12 >= inst.row(0))


def test_neighbours():
    lab = np.array([0.0, 2.0, 1.0, 3.0, -1.0])
    prev, nxt = label_neighbours(lab, cyclic=False)
    assert prev.tolist() == [-1, 0, 0, 2, -1]
    assert nxt.tolist() == [4, 2, 4, 4, -1]
    prev, nxt = label_neighbours(lab, cyclic=True)
    assert prev[0] == 4 and nxt[4] == -1
    with pytest.raises(ValueError):
        quotient_classes(small_index(16), mode="torus")


def test_simple_geodesics():
    idx = small_index(2 ** 10, 4)
    inst = build_metric(idx)
    rng = np.random.default_rng(1)
    for u in rng.integers(0, 2 ** 10, 20):
        path = simple_geodesic(inst, int(u))
        assert path.points[0] == u and inst.classes[path.points[-1]] == inst.classes[inst.x_star]
        dev, ok = geodesic_check(inst, path)
        # hitting-time records are exact geodesics of the grid metric
        assert ok and dev <= 1e-12, dev
    path = simple_geodesic(inst, 0)
    assert path.length == pytest.approx(idx.labels[0] - idx.w_star)
    # a geodesic followed by its reversal returns to the start: not a geodesic
    loop = path.concat(path.reversed())
    dev, ok = geodesic_check(inst, loop, tol=1e-9)
    assert not ok and dev == pytest.approx(2 * path.length)


def test_slice_geodesic_direction():
    idx = small_index(256, 6)
    inst = build_metric(idx, mode=SLICE)
    u = 0 if idx.s_star > 0 else 256
    path = simple_geodesic(inst, u)
    assert geodesic_check(inst, path)[1]
    assert 0 < idx.s_star < 256
    with pytest.raises(ValueError):
        simple_geodesic(inst, idx.s_star + 1, direction=1)
    with pytest.raises(ValueError):
        simple_geodesic(inst, 0, direction=2)


def test_path_validation():
    with pytest.raises(ValueError):
        GeodesicPath(np.array([1, 2]), np.array([0.0, -0.5]))
    with pytest.raises(ValueError):
        GeodesicPath(np.array([1, 2]), np.array([0.0]))


def test_alignment_trivial_cases():
    inst = build_metric(small_index(256, 3))
    s = inst.x_star
    res = alignment_test(inst, 0, s, s)
    assert res.aligned and res.defect == 0.0
    # every point lies on a geodesic to x_* through the simple geodesic
    path = simple_geodesic(inst, 17)
    mid = int(path.points[len(path.points) // 2])
    res = alignment_test(inst, 17, s, mid)
    assert res.aligned and res.middle == mid


def test_coalescence_point():
    idx = small_index(256, 5)
    x1 = (idx.s_star + 128) % 256
    inst = build_metric(idx, x1=x1)
    k, lab = coalescence_point(inst)
    lo, hi = sorted((0, x1))
    arc = np.arange(lo, hi + 1) if not lo <= idx.s_star <= hi else np.r_[hi:257, 0:lo + 1]
    assert lab == idx.labels[arc].min()
    g0, g1 = simple_geodesic(inst, 0), simple_geodesic(inst, x1)
    tail0 = g0.points[idx.labels[g0.points] < lab]
    tail1 = g1.points[idx.labels[g1.points] < lab]
    assert np.array_equal(inst.classes[tail0], inst.classes[tail1])
    with pytest.raises(ValueError):
        coalescence_point(build_metric(idx))
