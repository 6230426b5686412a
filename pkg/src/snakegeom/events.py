"""Probabilistic claims checked by simulation.

* the eps-hub criterion on finite metric instances and hub-rate sweeps;
* the events ``E_n`` of the Bessel spine: ``P(E_n) = E[exp(-6 I_n)]`` where
  ``I_n`` integrates ``(R - c)^-2 - R^-2`` (``c = 2^-n-1``) over
  ``[tau_1, tau_{2^-n}]`` of a Bessel(-5) path, or equivalently ``(X -
  1/2)^-2 - X^-2`` over ``[S_1, S_{2^n}]`` of a Bessel(9) path;
* the product identity, ``p_inf`` and the Kochen-Stone lower bound;
* the free-measure formula ``N_x(W_* < y) = 3 / (2 (x - y)^2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .bessel import (FORWARD_STEP, RETURN_TOL, REVERSED_STEP, bridge_crossed, exit_level, minus5_steps, nine_steps,
                     return_probability)
from .metric import MetricInstance, alignment_test, build_metric
from .refine import normalized_minima
from .rng import replica_rng
from .sampler import DurationMixture, SampleConfig, duration_mass_above, sample_durations, sample_snake
from .snake import TreeIndex
from .stats import Z95, ExperimentReport, mean_report

FORWARD, REVERSED = "forward", "reversed"


def inf_formula(x, y):
    """``N_x(W_* < y)`` for ``y < x``."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if np.any(y >= x):
        raise ValueError("need y < x")
    return 1.5 / (x - y) ** 2


# ---------------------------------------------------------------- hubs

# Continuous-valued lifetimes almost never repeat a value, so their grid
# trees have singleton classes and the chain distance collapses to D°.
# Lattice lifetimes revisit vertices and keep the chain infimum non-trivial.
METRIC_EXCURSION = "lattice"


@dataclass(frozen=True)
class HubQuery:
    instance: MetricInstance
    triple: tuple
    separation: float
    eps: float

    def __post_init__(self):
        if not self.eps > 0 or not self.separation > 0:
            raise ValueError("eps and separation must be positive")
        if len(self.triple) != 3:
            raise ValueError("a hub query needs three points")


def hub_excess(dist_rows, pair_dist):
    """
    ``excess(w) = max_{i<j} d(x_i, w) + d(w, x_j) - d(x_i, x_j)`` for every ``w``.

    ``dist_rows`` is ``3 x n`` (distances from each ``x_i``), ``pair_dist``
    the ``3 x 3`` matrix between them.
    """
    rows = np.asarray(dist_rows, dtype=float)
    out = np.full(rows.shape[1], -np.inf)
    for i, j in ((0, 1), (0, 2), (1, 2)):
        np.maximum(out, rows[i] + rows[j] - pair_dist[i, j], out=out)
    return out


def eps_hub_test(q: HubQuery):
    """
    Exhaustive witness scan.  Returns ``(is_hub, witness grid index, excess)``.

    The witness minimizes the excess over all points of the instance (smallest
    class on ties); the test holds iff the three points are pairwise further
    apart than ``separation`` and the excess is below ``eps``.
    """
    inst = q.instance
    pts = np.array(q.triple, dtype=int)
    rows = np.stack([inst.class_row(inst.classes[p]) for p in pts])
    pair = rows[:, inst.classes[pts]]
    exc = hub_excess(rows, pair)
    w = int(np.argmin(exc))
    best = max(float(exc[w]), 0.0)
    separated = bool(pair[0, 1] > q.separation and pair[0, 2] > q.separation and pair[1, 2] > q.separation)
    return bool(separated and best < q.eps), int(inst.points[w]), best


def hub_rate_experiment(grid_size, eps_list, replicas, seed, separation=0.05, duration=1.0,
                        excursion=METRIC_EXCURSION):
    """
    Fraction of random spheres where a uniform triple borders an eps-hub.

    Each replica samples one sphere and one triple (uniform in contour time)
    and records the minimal excess; all ``eps`` reuse it.  Returns a dict
    with per-eps rates, 95% intervals and the per-replica excesses.
    """
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps_list):
        raise ValueError("eps values must be positive")
    excess = np.empty(replicas)
    separated = np.empty(replicas, dtype=bool)
    diam = np.empty(replicas)
    cfg = SampleConfig(grid_size, duration, 0.0, seed, excursion)
    for k in range(int(replicas)):
        rng = replica_rng(seed, k)
        snake = sample_snake(cfg, rng)
        inst = build_metric(TreeIndex(snake))
        triple = rng.integers(0, grid_size, size=3)
        q = HubQuery(inst, tuple(int(t) for t in triple), separation, max(eps_list))
        _, _, excess[k] = eps_hub_test(q)
        pair = inst.matrix(triple)
        separated[k] = bool(np.all(pair[np.triu_indices(3, 1)] > separation))
        diam[k] = float(inst.labels.max() - inst.labels.min())
    rows = []
    for e in eps_list:
        hits = (separated & (excess < e)).astype(float)
        rate = float(hits.mean())
        half = Z95 * math.sqrt(max(rate * (1 - rate), 0.0) / replicas)
        rows.append({"eps": e, "rate": rate, "half_width": half, "ci": [rate - half, rate + half]})
    return {"rows": rows, "excess": excess.tolist(), "separated": separated.tolist(),
            "label_range": diam.tolist(), "replicas": int(replicas), "seed": int(seed),
            "grid_size": int(grid_size), "separation": float(separation), "excursion": excursion}


def rates_monotone(rows) -> bool:
    """Rates never increase as eps decreases, up to overlap of the 95% intervals."""
    ordered = sorted(rows, key=lambda r: -r["eps"])
    return all(b["ci"][0] <= a["ci"][1] for a, b in zip(ordered, ordered[1:]))


# ---------------------------------------------------------------- E_n


def _g(r, c):
    """``(r - c)^-2 - r^-2`` for ``r > c``, else 0."""
    r = np.asarray(r, dtype=float)
    ok = r > c
    safe = np.where(ok, r, c + 1.0)
    return np.where(ok, 1.0 / (safe - c) ** 2 - 1.0 / safe ** 2, 0.0)


def forward_segments(replicas, seed, n_max, step=FORWARD_STEP):
    """
    Segment integrals along Bessel(-5) paths from 1.

    ``S[r, k-1, j-1] = int over [tau_{2^-(k-1)}, tau_{2^-k}] of
    (R - 2^-j-1)^-2 - R^-2`` for ``1 <= k <= j <= n_max`` (0 elsewhere).
    Hitting times use bridge-corrected crossings inside each step.
    """
    K = int(n_max)
    rng = replica_rng(seed, 0)
    levels = 2.0 ** -np.arange(K + 2)  # levels[k] = 2^-k
    cs = 2.0 ** -(np.arange(1, K + 1) + 1.0)
    jj = np.arange(1, K + 1)
    S = np.zeros((replicas, K, K))
    seg = np.ones(replicas, dtype=int)
    for ids, _, r0, r1, dt in minus5_steps(rng, replicas, step):
        cur = seg[ids]
        live = cur <= K
        if not live.any():
            if np.all(seg > K):
                break
            continue
        ids, r0, r1, dt, cur = ids[live], r0[live], r1[live], dt[live], cur[live]
        theta0 = np.zeros(ids.size)
        ra = r0.copy()
        todo = np.ones(ids.size, dtype=bool)
        while todo.any():
            lev = levels[np.minimum(cur, K + 1)]
            active = todo & (cur <= K)
            below = active & (r1 < lev)
            dip = active & ~below & bridge_crossed(rng, ra, r1, lev, (1.0 - theta0) * dt)
            with np.errstate(divide="ignore", invalid="ignore"):
                lin = np.where(below, (r0 - lev) / (r0 - r1), 1.0)
            theta = np.where(below, lin, np.where(dip, theta0 + 0.5 * (1.0 - theta0), 1.0))
            rb = np.where(below | dip, lev, r1)
            width = (theta - theta0) * dt
            piece = 0.5 * width[:, None] * (_g(ra[:, None], cs[None, :]) + _g(rb[:, None], cs[None, :]))
            piece *= (jj[None, :] >= cur[:, None]) & active[:, None]
            rows = np.nonzero(active)[0]
            S[ids[rows], cur[rows] - 1, :] += piece[rows]
            cross = below | dip
            cur = cur + cross
            seg[ids] = np.minimum(cur, K + 1)
            theta0 = np.where(cross, theta, 1.0)
            ra = rb
            todo = cross & (cur <= K)
        if np.all(seg > K):
            break
    return S


def forward_functionals(S):
    """``I_n = sum_{k<=n} S[k, n]`` for ``n = 1..n_max`` (columns)."""
    K = S.shape[1]
    return np.stack([S[:, :n, n - 1].sum(axis=1) for n in range(1, K + 1)], axis=1)


def joint_functional(S, n, m):
    """Exponent integral of ``E_n and E_m`` (``n > m``) on one forward path."""
    return S[:, :m, m - 1].sum(axis=1) + S[:, m:n, n - 1].sum(axis=1)


def reversed_functionals(replicas, seed, n_max, step=REVERSED_STEP, return_tol=RETURN_TOL):
    """
    Integrals of ``(X - 1/2)^-2 - X^-2`` along Bessel(9) paths from 0.

    Returns ``(Q, A, L)``: ``Q[:, n-1]`` covers ``[S_1, S_{2^n}]``, ``A`` covers
    ``[S_1, T_L]`` with ``T_L`` the first passage at the exit level ``L``
    (which also certifies every ``S_{2^n}`` up to ``return_tol``).
    """
    K = int(n_max)
    rng = replica_rng(seed, 1)
    marks = 2.0 ** np.arange(1, K + 1)
    stop = exit_level(marks[-1], return_tol)
    g1 = float(_g(1.0, 0.5))
    A = np.zeros(replicas)
    Q = np.zeros((replicas, K))
    for ids, _, x0, x1, dt in nine_steps(rng, replicas, step, stop_level=stop):
        f0 = _g(x0, 0.5)
        f1 = _g(x1, 0.5)
        a_old = A[ids]

        def crossing(level):
            below = x1 < level
            up = (x0 < level) & ~below
            dip = ~below & ~up & bridge_crossed(rng, x0, x1, level, dt)
            with np.errstate(divide="ignore", invalid="ignore"):
                theta = np.where(below, 1.0, np.where(up, (level - x0) / (x1 - x0), 0.5))
            return below | up | dip, theta

        touch1, th1 = crossing(1.0)
        a_new = np.where(touch1, 0.5 * (1.0 - th1) * dt * (g1 + f1), a_old + 0.5 * dt * (f0 + f1))
        for n in range(K):
            touch, th = crossing(marks[n])
            at = np.where(touch1, np.maximum(th - th1, 0.0) * 0.5 * dt * (g1 + f1), a_old + th * 0.5 * dt * (f0 + f1))
            q = Q[ids, n]
            Q[ids, n] = np.where(touch, at, q)
        A[ids] = a_new
    return Q, A, stop


def tail_integral_bound(level) -> float:
    """
    ``E_L[int_0^inf (X - 1/2)^-2 - X^-2 dt]`` for Bessel(9) from ``L``, using
    the Green function ``(2/7) y^8 max(L, y)^-7`` restricted to ``y > 1``.
    """
    L = float(level)

    def integrand(y):
        return (2.0 / 7.0) * y ** 8 * max(L, y) ** -7 * float(_g(y, 0.5))

    below, _ = integrate.quad(integrand, 1.0, L, limit=200)
    above, _ = integrate.quad(integrand, L, np.inf, limit=200)
    return below + above


@dataclass
class EnEstimate:
    n: int
    estimate: float
    half_width: float
    replicas: int
    method: str
    std_error: float = float("nan")
    seed: int | None = None
    samples: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.estimate <= 1.0:
            raise ValueError("probability estimate outside [0, 1]")

    @property
    def ci(self):
        return (self.estimate - self.half_width, self.estimate + self.half_width)

    def to_dict(self):
        return {"n": self.n, "estimate": self.estimate, "half_width": self.half_width, "ci": list(self.ci),
                "replicas": self.replicas, "method": self.method, "std_error": self.std_error, "seed": self.seed}


def _en_from(values, n, method, seed):
    rep = mean_report(values, seed)
    return EnEstimate(n, rep.estimate, rep.half_width, rep.replicas, method, rep.std_error, seed, values)


def estimate_P_En(n, method=REVERSED, step=None, replicas=5000, seed=0):
    """``P(E_n)`` by Monte Carlo along forward Bessel(-5) or reversed Bessel(9) paths."""
    return estimate_P_En_sweep(n, method, step, replicas, seed)[-1]


def estimate_P_En_sweep(n_max, method=REVERSED, step=None, replicas=5000, seed=0):
    """``[P(E_1), ..., P(E_n_max)]`` from one batch of paths."""
    if n_max < 1:
        raise ValueError("n must be >= 1")
    if method == FORWARD:
        I = forward_functionals(forward_segments(replicas, seed, n_max, step or FORWARD_STEP))
    elif method == REVERSED:
        I, _, _ = reversed_functionals(replicas, seed, n_max, step or REVERSED_STEP)
    else:
        raise ValueError(f"unknown method {method!r}; direct tree sampling is not provided")
    vals = np.exp(-6.0 * I)
    return [_en_from(vals[:, k], k + 1, method, seed) for k in range(n_max)]


def check_product_identity(n, m, replicas=5000, seed=0, step=FORWARD_STEP):
    """
    Joint ``P(E_n and E_m)`` on single forward paths against ``P(E_m) P(E_{n-m})``.

    The marginals come from an independent batch (seed + 1); the product's
    standard error is propagated to first order.
    """
    if not (n > m >= 1):
        raise ValueError("need n > m >= 1")
    S = forward_segments(replicas, seed, n, step)
    joint = mean_report(np.exp(-6.0 * joint_functional(S, n, m)), seed)
    marg = estimate_P_En_sweep(max(m, n - m), FORWARD, step, replicas, seed + 1)
    pm, pnm = marg[m - 1], marg[n - m - 1]
    prod = pm.estimate * pnm.estimate
    # both marginals come from the same paths; bound the covariance term by Cauchy-Schwarz
    se_prod = pnm.estimate * pm.std_error + pm.estimate * pnm.std_error
    gap = joint.estimate - prod
    se = math.hypot(joint.std_error, se_prod)
    return {"n": n, "m": m, "joint": joint.to_dict(), "product": prod, "product_se": se_prod,
            "P_m": pm.to_dict(), "P_n_minus_m": pnm.to_dict(), "z": gap / se if se > 0 else 0.0,
            "within_ci": bool(abs(gap) <= Z95 * se)}


def kochen_stone_ratio(p):
    """
    Finite Kochen-Stone ratio ``(sum p_k)^2 / sum_{i,j} P(E_i and E_j)`` with
    ``P(E_i and E_j) = P(E_min) P(E_|i-j|)`` and ``P(E_0) = 1``.
    """
    p = np.asarray(p, dtype=float)
    ext = np.concatenate([[1.0], p])
    n = p.size
    i, j = np.meshgrid(np.arange(1, n + 1), np.arange(1, n + 1), indexing="ij")
    pair = ext[np.minimum(i, j)] * ext[np.abs(i - j)]
    return float(p.sum() ** 2 / pair.sum()), pair


def estimate_p_infty_and_KS_bound(n_max=6, replicas=5000, seed=0, step=REVERSED_STEP,
                                  return_tol=RETURN_TOL):
    """
    ``p_inf`` and two Kochen-Stone lower bounds on ``P(limsup E_n)``.

    Paths run to the exit level ``L`` of ``2^n_max``.  Truncating the integral
    at ``T_L`` overestimates ``p_inf``; by Jensen the remainder costs at most
    a factor ``exp(-6 b(L))`` with ``b`` from :func:`tail_integral_bound`, so
    ``p_lower = mean(exp(-6 A)) exp(-6 b(L))`` is reported as the estimate.
    """
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    Q, A, L = reversed_functionals(replicas, seed, n_max, step, return_tol)
    b = tail_integral_bound(L)
    factor = math.exp(-6.0 * b)
    raw = mean_report(np.exp(-6.0 * A), seed)
    p_inf = ExperimentReport(raw.estimate * factor, raw.half_width * factor, raw.replicas, seed,
                             raw.std_error * factor,
                             {"upper_estimate": raw.estimate, "tail_factor": factor, "exit_level": L,
                              "tail_integral_bound": b, "return_probability": return_probability(2.0 ** n_max, L)})
    pk = [mean_report(np.exp(-6.0 * Q[:, k]), seed) for k in range(n_max)]
    p = np.array([r.estimate for r in pk])
    ratio, pair = kochen_stone_ratio(p)
    # conservative plug-in: upper CI of the mean pairwise probability
    p_hi = np.minimum(np.array([r.ci[1] for r in pk]), 1.0)
    _, pair_hi = kochen_stone_ratio(p_hi)
    mean_pair_hi = min(float(pair_hi.mean()), 1.0)
    p_lo = max(p_inf.ci[0], 0.0)
    ks_asymptotic = p_lo ** 2 / mean_pair_hi
    return {"p_inf": p_inf.to_dict(), "p_inf_lower_ci": p_lo, "P_En": [r.to_dict() for r in pk],
            "ks_ratio_finite": ratio, "ks_lower_bound": ks_asymptotic, "mean_pairwise_upper": mean_pair_hi,
            "monotone_p_inf_below_P_En": bool(np.all(p_inf.estimate <= p + 1e-15)),
            "n_max": n_max, "replicas": int(replicas), "seed": int(seed)}


# ---------------------------------------------------------------- free measure


def duration_tail_check(t=1.0, t_min=2.0 ** -10, samples=200000, seed=0, mixture=None):
    """
    ``N(sigma > t)`` two ways: midpoint quadrature of the duration density
    (plus the analytic mass above ``t_max``), and Monte Carlo counting of
    durations drawn from the density restricted to ``(t_min, inf)``.
    """
    mixture = mixture or DurationMixture.geometric()
    quad = mixture.integrate((mixture.t_grid > t).astype(float)) + mixture.mass_above
    rng = replica_rng(seed, 0)
    draws = sample_durations(rng, samples, t_min)
    hits = draws > t
    mass = float(duration_mass_above(t_min))
    mc = mean_report(hits * mass, seed)
    return {"t": t, "exact": float(duration_mass_above(t)), "quadrature": quad,
            "monte_carlo": mc.to_dict()}


def verify_inf_formula(x, ys, mixture=None, replicas=2000, seed=0, grid_size=2 ** 10, minima=None):
    """
    Duration-mixture Monte Carlo for ``N_x(W_* < y)`` against the closed form.

    A single bank of ``replicas`` normalised minima ``w`` (refined continuum
    minima under ``N_0^(1)``) serves every duration node through scaling:
    ``W_* = x + t^(1/4) w`` under ``N_x^(t)``.  Every node therefore uses all
    replicas, and each replica contributes ``sum_k weight_k 1{x + t_k^(1/4)
    w < y}`` plus its exact mass above ``t_max``; the confidence interval is
    taken over replicas, which accounts for the sharing.  The mass below
    ``t_min`` is only bounded.
    """
    mixture = mixture or DurationMixture.geometric(nodes=64)
    ys = [float(y) for y in np.atleast_1d(ys)]
    if any(y >= x for y in ys):
        raise ValueError("need y < x for every y")
    w = normalized_minima(replicas, seed, grid_size) if minima is None else np.asarray(minima, float)
    scale = mixture.t_grid ** 0.25
    rows = []
    for y in ys:
        gap = x - y
        below = (x + scale[None, :] * w[:, None]) < y
        with np.errstate(divide="ignore"):
            t_star = np.where(w < 0, (gap / np.abs(np.minimum(w, -1e-300))) ** 4, np.inf)
        tail = duration_mass_above(np.maximum(mixture.t_max, t_star))
        per = below.astype(float) @ mixture.weights + tail
        rep = mean_report(per, seed)
        # below t_min the indicator holds on (t_star, t_min); that mass is left out and reported
        lower = float(np.mean(np.where(t_star < mixture.t_min,
                                       duration_mass_above(np.minimum(t_star, mixture.t_min))
                                       - duration_mass_above(mixture.t_min), 0.0)))
        target = float(inf_formula(x, y))
        rows.append({"x": float(x), "y": y, "estimate": rep.estimate, "half_width": rep.half_width,
                     "ci": list(rep.ci), "target": target,
                     "relative_error": abs(rep.estimate - target) / target,
                     "lower_tail_bound": lower, "replicas": rep.replicas})
    return {"rows": rows, "seed": int(seed), "grid_size": int(grid_size),
            "t_min": mixture.t_min, "t_max": mixture.t_max, "nodes": int(len(mixture.t_grid))}


# ---------------------------------------------------------------- alignment


def alignment_experiment(grid_size, instances, pairs, seed, tol_factor=5.0, duration=1.0,
                         excursion=METRIC_EXCURSION):
    """
    Among uniform pairs ``(u, v)`` with ``dist(u, v) >= D°(u, v) - tol``, the
    rate at which ``(u, v, x_*)`` are aligned.

    ``tol`` is ``tol_factor`` grid-step label increments of each instance.
    """
    cfg = SampleConfig(grid_size, duration, 0.0, seed, excursion)
    eligible = passed = tested = 0
    defects = []
    for k in range(int(instances)):
        rng = replica_rng(seed, k)
        inst = build_metric(TreeIndex(sample_snake(cfg, rng)))
        tol = inst.step_tolerance(tol_factor)
        uv = rng.integers(0, grid_size + 1, size=(int(pairs), 2))
        for u, v in uv.tolist():
            tested += 1
            if inst.dist(u, v) < inst.one_step(u, v) - tol:
                continue
            eligible += 1
            res = alignment_test(inst, u, v, inst.x_star, tol)
            passed += res.aligned
            defects.append(res.defect)
    rate = passed / eligible if eligible else float("nan")
    half = Z95 * math.sqrt(max(rate * (1 - rate), 0.0) / eligible) if eligible else float("nan")
    return {"grid_size": int(grid_size), "instances": int(instances), "pairs_tested": tested,
            "eligible": eligible, "aligned": passed, "rate": rate, "half_width": half,
            "max_defect": max(defects) if defects else float("nan"), "seed": int(seed),
            "excursion": excursion}
