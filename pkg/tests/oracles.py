"""Slow independent references: brute-force one-step distances and dense shortest paths."""

import numpy as np
from scipy.sparse.csgraph import floyd_warshall as scipy_fw


def brute_one_step(tip, zeta, slice_mode=False):
    """All-pairs ``D°`` (or ``d~``) by direct scans of the label arrays."""
    m = tip.size
    out = np.zeros((m, m))
    for s in range(m):
        for t in range(m):
            lo, hi = min(s, t), max(s, t)
            inner = tip[lo:hi + 1].min()
            if slice_mode:
                out[s, t] = tip[s] + tip[t] - 2 * inner
            else:
                outer = min(tip[hi:].min(), tip[:lo + 1].min())
                out[s, t] = tip[s] + tip[t] - 2 * max(inner, outer)
    return out


def brute_tree_zero(zeta):
    m = zeta.size
    z = np.zeros((m, m), dtype=bool)
    for s in range(m):
        for t in range(s, m):
            z[s, t] = z[t, s] = zeta[s] + zeta[t] - 2 * zeta[s:t + 1].min() == 0
    return z


def brute_classes(tip, zeta, slice_mode=False):
    """Union-find over pairs at zero one-step or tree distance; ids ordered by smallest member."""
    m = tip.size
    zero = (brute_one_step(tip, zeta, slice_mode) == 0) | brute_tree_zero(zeta)
    parent = list(range(m))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for s, t in zip(*np.nonzero(zero)):
        ra, rb = find(int(s)), find(int(t))
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = [find(a) for a in range(m)]
    ids = {r: i for i, r in enumerate(sorted(set(roots)))}
    return np.array([ids[r] for r in roots])


def dense_chain_distance(tip, zeta, classes, slice_mode=False):
    """Floyd-Warshall on the complete class graph weighted by the class-level one-step distance."""
    d = brute_one_step(tip, zeta, slice_mode)
    k = classes.max() + 1
    w = np.full((k, k), np.inf)
    for s in range(tip.size):
        for t in range(tip.size):
            a, b = classes[s], classes[t]
            w[a, b] = min(w[a, b], d[s, t])
    np.fill_diagonal(w, 0.0)
    return scipy_fw(w, directed=False)
