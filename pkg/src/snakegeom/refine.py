"""Adaptive refinement of the label minimum of a snake trajectory.

The grid minimum of the labels misses the continuum minimum by an amount of
order ``h**(1/4)`` (``h`` the grid step), which is far too slow for
quantitative checks.  This module samples the continuum minimum to
arbitrary resolution, refining only where the minimum can be.

Skeleton
    Given the lifetime at grid times, each cell between consecutive grid
    points is a Brownian bridge conditioned to stay positive.  Its minimum
    has an explicit law, so we sample it and interleave it with the grid
    values.  The tree spanned by grid points and cell minima then carries
    labels whose joint law is exactly the continuum one.

Refinement
    A cell whose minimum is known is cut at the argmin into two pieces that
    end (or start) at their minimum: each is a Bessel(3) bridge, whose
    midpoint is the norm of a 3-d Gaussian.  The half next to the
    non-minimal end is again a conditioned bridge; its minimum is sampled
    and inserted into the tree by splitting the edge it falls on (labels on
    an edge are a Brownian bridge given the edge ends).  Every step is exact
    in law; only the stopping rule (cells below ``h_min`` or provably far
    from the running minimum) introduces error.
"""

from __future__ import annotations

import math

import numpy as np

from .rng import as_rng, replica_rng
from .sampler import SampleConfig, _ancestor_sums, sample_excursion
from .snake import tree_structure

M_CELL, E_RIGHT, E_LEFT = 0, 1, 2

_LOG_GRID = np.geomspace(1e-13, 0.5, 160)


def conditioned_bridge_min(rng, a, c, h, floor=0.0):
    """
    Minimum of a Brownian bridge from ``a`` to ``c`` over time ``h`` given
    that it stays above ``floor``.  Inverse-CDF from
    ``P(min < m) = exp(-2 (a - m)(c - m) / h)``.
    """
    a = np.asarray(a, float) - floor
    c = np.asarray(c, float) - floor
    u = rng.random(np.shape(a))
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        stay_low = np.exp(-2.0 * a * c / h)
        q = -0.5 * h * np.log(stay_low + u * (1.0 - stay_low))
        m = 0.5 * ((a + c) - np.sqrt((a - c) ** 2 + 4.0 * q))
    m = np.clip(np.nan_to_num(m, nan=0.0), 0.0, np.minimum(a, c))
    return floor + m


def argmin_time(rng, a, c, mu, h):
    """
    Time of the minimum ``mu`` of a Brownian bridge ``a -> c`` over ``[0, h]``.

    The density is proportional to ``f_{a-mu}(t) f_{c-mu}(h-t)`` with
    ``f_d`` the first-passage density of level ``d``; sampled by inverting a
    tabulated CDF on a grid that is geometric towards both ends.
    """
    a = np.atleast_1d(np.asarray(a, float))
    c = np.atleast_1d(np.asarray(c, float))
    mu = np.atleast_1d(np.asarray(mu, float))
    h = np.atleast_1d(np.asarray(h, float))
    d1 = (a - mu)[:, None]
    d2 = (c - mu)[:, None]
    frac = np.concatenate([_LOG_GRID, 1.0 - _LOG_GRID[::-1][1:]])
    t = h[:, None] * frac[None, :]
    s = h[:, None] - t
    with np.errstate(divide="ignore"):
        logf = (-1.5 * np.log(t) - d1 ** 2 / (2 * t)) + (-1.5 * np.log(s) - d2 ** 2 / (2 * s))
    logf -= logf.max(axis=1, keepdims=True)
    dens = np.exp(logf)
    cdf = np.concatenate([np.zeros((dens.shape[0], 1)),
                          np.cumsum(0.5 * (dens[:, 1:] + dens[:, :-1]) * np.diff(t, axis=1), axis=1)], axis=1)
    cdf /= cdf[:, -1:]
    u = rng.random(a.size)
    out = np.empty(a.size)
    for k in range(a.size):
        out[k] = np.interp(u[k], cdf[k], t[k])
    out = np.where(d1[:, 0] <= 0, 0.0, out)
    out = np.where(d2[:, 0] <= 0, h, out)
    return out


class RefinedMinimum:
    """
    Exact skeleton of a snake on a grid, refined near its label minimum.

    ``margin`` is the number of local scales (``max(h**0.25, sqrt(height
    span))``) a cell's content is allowed to undercut its known labels
    before being discarded.
    """

    def __init__(self, lifetime, duration, start_label, rng, margin=6.0, h_min=None):
        self.rng = rng
        self.margin = float(margin)
        zeta = np.asarray(lifetime, float)
        n = zeta.size - 1
        h = duration / n
        self.h_min = duration * 2.0 ** -28 if h_min is None else float(h_min)
        mins = conditioned_bridge_min(rng, zeta[:-1], zeta[1:], h)
        skel = np.empty(2 * n + 1)
        skel[0::2] = zeta
        skel[1::2] = mins
        parent, link = tree_structure(skel)
        var = np.where(parent >= 0, skel - skel[np.maximum(parent, 0)], 0.0)
        labels = (start_label + _ancestor_sums(rng.standard_normal(skel.size) * np.sqrt(var), parent))[link]
        self._cap = max(4 * skel.size, 1024)
        self.height = np.empty(self._cap)
        self.label = np.empty(self._cap)
        self.parent = np.empty(self._cap, dtype=np.int64)
        self.size = skel.size
        self.height[: self.size] = skel
        self.label[: self.size] = labels
        self.parent[: self.size] = parent
        self.grid_labels = labels[0::2].copy()
        self.best = float(labels.min())

        left = np.arange(0, 2 * n, 2)
        right = left + 2
        mid = left + 1
        kind = np.full(n, M_CELL)
        kind[zeta[:-1] == 0] = E_LEFT
        kind[zeta[1:] == 0] = E_RIGHT
        self.cells = (kind, left, right, mid, np.full(n, h))
        self.levels = 0
        # lowest threshold used to discard cells while the minimum was above it
        self.cut = math.inf

    @property
    def exact(self) -> bool:
        """Whether ``best`` is the refined minimum rather than a value known to exceed ``cut``."""
        return self.best < self.cut or self.cut == math.inf

    def _grow(self, extra):
        need = self.size + extra
        if need <= self._cap:
            return
        cap = max(need, 2 * self._cap)
        for name in ("height", "label", "parent"):
            arr = getattr(self, name)
            new = np.empty(cap, dtype=arr.dtype)
            new[: self.size] = arr[: self.size]
            setattr(self, name, new)
        self._cap = cap

    def _new_vertex(self, height, label, parent):
        v = self.size
        self.height[v] = height
        self.label[v] = label
        self.parent[v] = parent
        self.size += 1
        return v

    def _insert_on_line(self, start, level, gauss):
        """Vertex at height ``level`` on the ancestral line of ``start``."""
        H, P = self.height, self.parent
        child = start
        while H[P[child]] > level:
            child = P[child]
        if H[child] == level:
            return child
        par = P[child]
        lo, hi = H[par], H[child]
        frac = (level - lo) / (hi - lo)
        mean = self.label[par] + frac * (self.label[child] - self.label[par])
        sd = math.sqrt(max((level - lo) * (hi - level) / (hi - lo), 0.0))
        v = self._new_vertex(level, mean + sd * gauss, par)
        P[child] = v
        return v

    def _lower_bounds(self, kind, left, right, mid, h):
        H, L = self.height, self.label
        ends = np.where(kind == E_LEFT, mid, left)
        other = np.where(kind == E_RIGHT, mid, right)
        known = np.minimum(np.minimum(L[ends], L[other]), L[mid])
        span = np.maximum(H[ends], H[other]) - H[mid]
        scale = np.maximum(h ** 0.25, np.sqrt(np.maximum(span, 0.0)))
        return known - self.margin * scale

    def run(self, threshold=None):
        """
        Refine until no cell can beat the running minimum; returns it.

        With ``threshold``, only decide whether the minimum lies below it:
        cells that cannot reach the threshold are dropped and refinement stops
        as soon as a label below it is found.  Later calls may continue with a
        lower threshold, or with none once the minimum was found below the
        last threshold; see :attr:`exact`.
        """
        rng = self.rng
        while True:
            if threshold is not None and self.best < threshold:
                break
            kind, left, right, mid, h = self.cells
            if kind.size == 0:
                break
            bound = self.best if threshold is None else min(self.best, threshold)
            if bound < self.best:
                self.cut = min(self.cut, bound)
            keep = (self._lower_bounds(kind, left, right, mid, h) < bound) & (h > self.h_min)
            kind, left, right, mid, h = kind[keep], left[keep], right[keep], mid[keep], h[keep]
            self.cells = (kind, left, right, mid, h)
            if kind.size == 0:
                break
            self.levels += 1
            H = self.height
            # M cells split at their argmin into two E cells
            m = kind == M_CELL
            if np.any(m):
                theta = argmin_time(rng, H[left[m]], H[right[m]], H[mid[m]], h[m])
                kind = np.concatenate([kind[~m], np.full(m.sum(), E_RIGHT), np.full(m.sum(), E_LEFT)])
                new_left = np.concatenate([left[~m], left[m], mid[m]])
                new_right = np.concatenate([right[~m], mid[m], right[m]])
                mid = np.concatenate([mid[~m], mid[m], mid[m]])
                h = np.concatenate([h[~m], theta, h[m] - theta])
                left, right = new_left, new_right
                pos = h > 0
                kind, left, right, mid, h = kind[pos], left[pos], right[pos], mid[pos], h[pos]
            self.cells = self._refine_e_cells(kind, left, right, mid, h)
        return self.best

    def _refine_e_cells(self, kind, left, right, mid, h):
        rng = self.rng
        count = kind.size
        self._grow(2 * count)
        H = self.height
        lo = H[mid]
        top = np.where(kind == E_RIGHT, H[left], H[right])
        span = top - lo
        g = rng.standard_normal((count, 3)) * np.sqrt(h / 4.0)[:, None]
        g[:, 0] += span / 2.0
        v = lo + np.linalg.norm(g, axis=1)
        half = h / 2.0
        far = np.where(kind == E_RIGHT, H[left], H[right])
        sub_min = conditioned_bridge_min(rng, far, v, half, floor=lo)
        gauss = rng.standard_normal((count, 2))

        out_kind, out_left, out_right, out_mid, out_h = [], [], [], [], []
        for k in range(count):
            start = left[k] if kind[k] == E_RIGHT else right[k]
            n1 = self._insert_on_line(int(start), float(sub_min[k]), gauss[k, 0])
            lab = self.label[n1] + math.sqrt(max(v[k] - sub_min[k], 0.0)) * gauss[k, 1]
            n2 = self._new_vertex(v[k], lab, n1)
            if lab < self.best:
                self.best = float(lab)
            if self.label[n1] < self.best:
                self.best = float(self.label[n1])
            if kind[k] == E_RIGHT:
                out_kind += [M_CELL, E_RIGHT]
                out_left += [left[k], n2]
                out_right += [n2, mid[k]]
                out_mid += [n1, mid[k]]
            else:
                out_kind += [E_LEFT, M_CELL]
                out_left += [mid[k], n2]
                out_right += [n2, right[k]]
                out_mid += [mid[k], n1]
            out_h += [half[k], half[k]]
        return (np.array(out_kind, dtype=np.int64), np.array(out_left, dtype=np.int64),
                np.array(out_right, dtype=np.int64), np.array(out_mid, dtype=np.int64),
                np.array(out_h, dtype=float))


DEFAULT_MARGIN = 3.0
# rare threshold events (a tree far above c dipping below it) sit in the tail of a
# cell's content, where a 3-scale cutoff drops about 6% of them
THRESHOLD_MARGIN = 8.0
DEFAULT_DEPTH = 24


def refined_minimum(lifetime, duration=1.0, start_label=0.0, rng=None, margin=DEFAULT_MARGIN, h_min=None):
    """Continuum label minimum for a grid lifetime, to resolution ``h_min``."""
    rng = as_rng(rng)
    return RefinedMinimum(lifetime, duration, start_label, rng, margin, h_min).run()


def sample_minimum(cfg: SampleConfig, rng=None, margin=DEFAULT_MARGIN, depth=DEFAULT_DEPTH) -> float:
    """``W_*`` under ``N_x^(t)``, refined down to durations ``t * 2**-depth``."""
    rng = as_rng(cfg.seed if rng is None else rng)
    zeta = sample_excursion(cfg, rng)
    return refined_minimum(zeta, cfg.duration, cfg.start_label, rng, margin, cfg.duration * 2.0 ** -depth)


def normalized_minima(replicas, seed, grid_size=2 ** 10, margin=DEFAULT_MARGIN, depth=DEFAULT_DEPTH) -> np.ndarray:
    """
    ``W_*`` samples under ``N_0^(1)``; replica ``k`` uses ``replica_rng(seed, k)``.

    By scaling, ``x + t**0.25 * w`` is then a sample under ``N_x^(t)``.
    """
    cfg = SampleConfig(grid_size, 1.0, 0.0, seed)
    return np.array([sample_minimum(cfg, replica_rng(seed, k), margin, depth) for k in range(int(replicas))])
