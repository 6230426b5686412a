import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snakegeom.events import (FORWARD, REVERSED, HubQuery, check_product_identity, duration_tail_check,
                              eps_hub_test, estimate_P_En_sweep, estimate_p_infty_and_KS_bound, hub_excess,
                              hub_rate_experiment, inf_formula, kochen_stone_ratio, rates_monotone,
                              verify_inf_formula)
from snakegeom.metric import build_metric
from snakegeom.sampler import DurationMixture
from snakegeom.stats import agree

from conftest import small_index


def test_inf_formula_values():
    assert inf_formula(1.0, 0.0) == 1.5
    assert inf_formula(1.0, -1.0) == 0.375
    with pytest.raises(ValueError):
        inf_formula(0.0, 1.0)


def test_star_excess():
    # three arms of length 1 around a centre (column 3)
    rows = np.array([[0, 2, 2, 1], [2, 0, 2, 1], [2, 2, 0, 1]], dtype=float)
    pair = rows[:, :3]
    exc = hub_excess(rows, pair)
    assert exc[3] == 0.0 and exc[0] == 2.0


def test_hub_query_validation():
    inst = build_metric(small_index(64))
    with pytest.raises(ValueError):
        HubQuery(inst, (1, 2, 3), 0.05, 0.0)
    with pytest.raises(ValueError):
        HubQuery(inst, (1, 2), 0.05, 0.1)


@given(st.integers(0, 10 ** 6), st.permutations([0, 1, 2]))
@settings(max_examples=20, deadline=None)
def test_hub_test_permutation_invariant(seed, perm):
    inst = build_metric(small_index(256, seed))
    rng = np.random.default_rng(seed)
    tri = rng.integers(0, 256, 3).tolist()
    a = eps_hub_test(HubQuery(inst, tuple(tri), 0.05, 0.1))
    b = eps_hub_test(HubQuery(inst, tuple(tri[i] for i in perm), 0.05, 0.1))
    assert a[0] == b[0] and a[2] == pytest.approx(b[2], abs=1e-12)


def test_hub_rates_monotone_in_eps():
    res = hub_rate_experiment(256, [0.5, 0.2, 0.1, 0.01], 30, seed=1)
    rates = [r["rate"] for r in res["rows"]]
    assert rates == sorted(rates, reverse=True)
    assert rates_monotone(res["rows"])
    assert min(res["excess"]) >= 0
    with pytest.raises(ValueError):
        hub_rate_experiment(64, [0.0], 2, 0)


def test_kochen_stone_independent_case():
    p = np.full(5, 0.3)
    ratio, pair = kochen_stone_ratio(p)
    assert np.allclose(np.diag(pair), 0.3)
    assert ratio == pytest.approx((5 * 0.3) ** 2 / (5 * 0.3 + 20 * 0.09))


def test_en_estimates():
    fwd = estimate_P_En_sweep(3, FORWARD, replicas=1500, seed=1)
    rev = estimate_P_En_sweep(3, REVERSED, replicas=1500, seed=2)
    for a, b in zip(fwd, rev):
        assert agree(a, b)
    est = [e.estimate for e in fwd]
    assert est == sorted(est, reverse=True) and 0 < est[-1] < 1
    with pytest.raises(ValueError):
        estimate_P_En_sweep(2, "direct")


def test_product_identity_and_p_inf():
    res = check_product_identity(2, 1, replicas=1500, seed=3)
    assert res["within_ci"]
    ks = estimate_p_infty_and_KS_bound(n_max=4, replicas=1500, seed=4)
    assert ks["p_inf_lower_ci"] > 0 and ks["ks_lower_bound"] > 0
    assert ks["monotone_p_inf_below_P_En"]


def test_inf_formula_quadrature_with_constant_minimum():
    # a bank of identical minima with w^2 = 3 / (4 c) integrates to the closed form exactly;
    # what is left is the midpoint error of one indicator step, at most half a cell
    w = -math.sqrt(1.5 * math.sqrt(2 * math.pi))
    for nodes, tol in ((64, 0.11), (4096, 0.002)):
        mix = DurationMixture.geometric(nodes=nodes)
        res = verify_inf_formula(1.0, [0.0, -1.0, 0.5], mixture=mix, minima=np.full(4, w))
        assert max(r["relative_error"] for r in res["rows"]) < tol


def test_duration_tail():
    res = duration_tail_check(samples=100000)
    assert res["quadrature"] == pytest.approx(res["exact"], rel=0.02)
    assert res["monte_carlo"]["estimate"] == pytest.approx(res["exact"], rel=0.02)
