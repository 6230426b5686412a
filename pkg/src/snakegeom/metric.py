"""Finite metric spaces from labelled trees: the chain distance and geodesics.

The chain distance ``D`` is the shortest-path metric of the complete graph on
tree points weighted by the one-step distance ``D°``.  That graph has
``O(n^2)`` edges, but it can be replaced by a certified sparse one.  If the
larger of the two arc minima in ``D°(u, v)`` is attained at ``k``, then
``D°(u, v) = (l_u - l_k) + (l_v - l_k)``, and walking from ``u`` towards
``k`` through successive "nearest point with label <= mine" steps
telescopes to exactly ``l_u - l_k``.  Each such step is itself a ``D°``
edge whose weight is the label difference.  So the graph in which every
grid index is joined to its nearest smaller-or-equal-label neighbour on
each side (cyclically on the sphere, linearly on the slice) has the same
shortest paths as the complete graph, with at most ``2n`` edges.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from .snake import TreeIndex, d_circ, d_circ_row, d_tilde
from .sparse_table import SparseTable

SPHERE = "sphere"
SLICE = "slice"
ARITH_SLACK = 1e-12


def _check_mode(mode):
    if mode not in (SPHERE, SLICE):
        raise ValueError(f"mode must be 'sphere' or 'slice', got {mode!r}")


def label_neighbours(labels, cyclic):
    """
    Nearest index on each side with label <= own label.

    On a cycle the search wraps; an index that is the strict global minimum
    gets no neighbour (-1).  On a line missing neighbours are -1 as well.
    """
    lab = np.asarray(labels, dtype=float)
    m = lab.size
    idx = np.arange(m)
    if cyclic:
        table = SparseTable(np.concatenate([lab, lab]))
        prev = table.previous_at_most(idx + m, threshold=lab)
        nxt = table.next_at_most(idx, threshold=lab)
        # a hit at distance m is the index itself: no other point qualifies
        prev = np.where(prev > idx, prev % m, -1)
        nxt = np.where(nxt < idx + m, nxt % m, -1)
        return prev, nxt
    table = SparseTable(lab)
    prev = table.previous_at_most(idx, threshold=lab)
    nxt = table.next_at_most(idx, threshold=lab)
    return prev, np.where(nxt >= m, -1, nxt)


def _successor_edges(idx: TreeIndex, mode):
    lab = idx.labels
    prev, nxt = label_neighbours(lab, cyclic=(mode == SPHERE))
    src = np.concatenate([np.arange(lab.size), np.arange(lab.size)])
    dst = np.concatenate([prev, nxt])
    keep = (dst >= 0) & (dst != src)
    src, dst = src[keep], dst[keep]
    return src, dst, lab[src] - lab[dst]


def quotient_classes(idx: TreeIndex, mode=SPHERE) -> np.ndarray:
    """
    Class id of every grid index; ids are ordered by smallest member.

    Two indices are merged when they code the same tree point or when the
    one-step distance between them is exactly zero (sphere: ``D°``, slice:
    ``d~``).  Zero one-step distances only arise between equal labels
    separated by larger ones, which are exactly the zero-weight neighbour
    edges, so one connected-components pass is enough.
    """
    _check_mode(mode)
    n1 = idx.labels.size
    src, dst, w = _successor_edges(idx, mode)
    zero = w == 0
    a = np.concatenate([np.arange(n1), src[zero]])
    b = np.concatenate([np.asarray(idx.tree_rep), dst[zero]])
    graph = coo_matrix((np.ones(a.size), (a, b)), shape=(n1, n1))
    _, comp = connected_components(graph, directed=False)
    first = np.full(comp.max() + 1, n1)
    np.minimum.at(first, comp, np.arange(n1))
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return rank[comp]


def class_one_step(idx: TreeIndex, classes, mode=SPHERE) -> np.ndarray:
    """
    Dense class-level one-step distance: minimum of ``D°`` (or ``d~``) over
    representative pairs.  ``O(N^2)`` memory; meant for small instances.
    """
    _check_mode(mode)
    classes = np.asarray(classes)
    k = int(classes.max()) + 1
    order = np.argsort(classes, kind="stable")
    starts = np.searchsorted(classes[order], np.arange(k))
    rows = np.empty((k, classes.size))
    slice_mode = mode == SLICE
    block = np.full(classes.size, np.inf)
    for c in range(k):
        block[:] = np.inf
        members = order[starts[c]: starts[c + 1] if c + 1 < k else classes.size]
        for s in members:
            np.minimum(block, d_circ_row(idx, int(s), slice_mode=slice_mode), out=block)
        rows[c] = block
    dense = np.minimum.reduceat(rows[:, order], starts, axis=1)
    np.fill_diagonal(dense, 0.0)
    return np.minimum(dense, dense.T)


@dataclass
class MetricBudget:
    """
    Edge-pruning configuration.

    ``max_candidates`` caps the number of candidate edges the certified pruner
    may generate; the neighbour graph needs about ``2N`` of them.  When the cap
    is too small, or ``dense`` is set, the build falls back to the complete
    one-step graph (with a warning in the first case).
    """

    max_candidates: int | None = None
    dense: bool = False


@dataclass
class MetricInstance:
    """
    Shortest-path metric on the quotient classes of a labelled tree.

    Points are addressed by grid index; ``dist`` maps them to their classes.
    Distance rows are computed by Dijkstra on demand and cached.
    """

    idx: TreeIndex
    kind: str
    classes: np.ndarray
    points: np.ndarray
    labels: np.ndarray
    graph: object
    marks: dict = field(default_factory=dict)
    method: str = "neighbour"
    _rows: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return int(self.points.size)

    @property
    def x0(self) -> int:
        return self.marks["x0"]

    @property
    def x_star(self) -> int:
        return self.marks["x_star"]

    def class_of(self, s) -> int:
        return int(self.classes[s])

    def class_row(self, c) -> np.ndarray:
        """Distances from class ``c`` to every class."""
        c = int(c)
        row = self._rows.get(c)
        if row is None:
            row = dijkstra(self.graph, directed=False, indices=c)
            row.setflags(write=False)
            self._rows[c] = row
        return row

    def row(self, s) -> np.ndarray:
        """Distances from grid index ``s`` to every grid index."""
        return self.class_row(self.classes[s])[self.classes]

    def dist(self, s, t) -> float:
        return float(self.class_row(self.classes[s])[self.classes[t]])

    def matrix(self, points=None) -> np.ndarray:
        """Distance matrix between grid indices (default: all class representatives)."""
        pts = self.points if points is None else np.asarray(points)
        cls = self.classes[pts]
        uniq, inv = np.unique(cls, return_inverse=True)
        missing = [int(c) for c in uniq if int(c) not in self._rows]
        if missing:
            block = dijkstra(self.graph, directed=False, indices=missing)
            for c, r in zip(missing, block):
                r.setflags(write=False)
                self._rows[c] = r
        rows = np.stack([self._rows[int(c)] for c in uniq])
        return rows[inv][:, cls]

    def one_step(self, s, t) -> float:
        """``D°`` (sphere) or ``d~`` (slice) between grid indices."""
        if self.kind == SPHERE:
            return d_circ(self.idx, s, t)
        return d_tilde(self.idx, s, t)

    def step_tolerance(self, factor=5.0) -> float:
        """``factor`` times the largest label increment over one grid step."""
        return float(factor * np.max(np.abs(np.diff(self.idx.labels))))


def build_metric(idx: TreeIndex, classes=None, mode=SPHERE, budget: MetricBudget | None = None,
                 x1=None) -> MetricInstance:
    """
    Exact chain distance on grid classes.

    The default graph is the certified neighbour graph described in the
    module docstring; ``budget`` can force the dense complete graph.
    ``x1`` marks a second boundary point (grid index) for coalescence.
    """
    _check_mode(mode)
    budget = budget or MetricBudget()
    classes = quotient_classes(idx, mode) if classes is None else np.asarray(classes)
    k = int(classes.max()) + 1
    points = np.full(k, classes.size)
    np.minimum.at(points, classes, np.arange(classes.size))
    labels = idx.labels[points]

    needed = 2 * idx.labels.size
    dense = budget.dense
    if not dense and budget.max_candidates is not None and budget.max_candidates < needed:
        warnings.warn(f"edge budget {budget.max_candidates} below the {needed} candidates needed to "
                      "certify the pruned graph; using the dense one-step graph", RuntimeWarning)
        dense = True

    if dense:
        graph = class_one_step(idx, classes, mode)
        method = "dense"
    else:
        src, dst, w = _successor_edges(idx, mode)
        a, b = classes[src], classes[dst]
        keep = a != b
        a, b, w = np.minimum(a[keep], b[keep]), np.maximum(a[keep], b[keep]), w[keep]
        order = np.lexsort((w, b, a))
        a, b, w = a[order], b[order], w[order]
        first = np.ones(a.size, dtype=bool)
        first[1:] = (a[1:] != a[:-1]) | (b[1:] != b[:-1])
        graph = coo_matrix((w[first], (a[first], b[first])), shape=(k, k)).tocsr()
        method = "neighbour"

    marks = {"x0": 0, "x_star": int(idx.s_star)}
    if x1 is not None:
        idx._check(int(x1))
        marks["x1"] = int(x1)
    return MetricInstance(idx, mode, classes, points, labels, graph, marks, method)


def floyd_warshall(weights) -> np.ndarray:
    """All-pairs shortest paths on a dense weight matrix (``O(n^3)`` oracle)."""
    d = np.array(weights, dtype=float)
    for k in range(d.shape[0]):
        np.minimum(d, d[:, k:k + 1] + d[k:k + 1, :], out=d)
    return d


@dataclass(frozen=True)
class GeodesicPath:
    """Grid indices visited by a path, with cumulative arc length."""

    points: np.ndarray
    arclength: np.ndarray

    def __post_init__(self):
        if len(self.points) != len(self.arclength) or len(self.points) == 0:
            raise ValueError("a path needs matching, non-empty points and arclength arrays")
        if self.arclength[0] != 0 or np.any(np.diff(self.arclength) < 0):
            raise ValueError("arclength must start at 0 and be nondecreasing")

    @property
    def length(self) -> float:
        return float(self.arclength[-1])

    @property
    def endpoints(self):
        return int(self.points[0]), int(self.points[-1])

    def reversed(self) -> "GeodesicPath":
        return GeodesicPath(self.points[::-1].copy(), self.length - self.arclength[::-1])

    def concat(self, other: "GeodesicPath") -> "GeodesicPath":
        pts = np.concatenate([self.points, other.points[1:]])
        arc = np.concatenate([self.arclength, self.length + other.arclength[1:] - other.arclength[0]])
        return GeodesicPath(pts, arc)


def _records(labels, order):
    """Positions in ``order`` where the running minimum of ``labels`` strictly drops."""
    seq = labels[order]
    run = np.minimum.accumulate(seq)
    drop = np.ones(seq.size, dtype=bool)
    drop[1:] = seq[1:] < run[:-1]
    return order[drop]


def simple_geodesic(instance: MetricInstance, u, direction=None) -> GeodesicPath:
    """
    Simple geodesic from grid index ``u`` to the label minimizer.

    Follows the successive first hitting times of lower labels along the
    contour from ``u`` towards ``s_*``: forward (cyclically) on the sphere,
    and without crossing the root on the slice.  ``direction`` (``+1`` or
    ``-1``) overrides the default direction.
    """
    idx = instance.idx
    idx._check(u)
    lab = idx.labels
    n1 = lab.size
    target = idx.s_star
    if direction is None:
        direction = 1 if (instance.kind == SPHERE or u <= target) else -1
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    if instance.kind == SLICE and (target - u) * direction < 0:
        raise ValueError("slice geodesics cannot cross the root")
    steps = ((target - u) * direction) % n1
    order = (u + direction * np.arange(steps + 1)) % n1
    pts = _records(lab, order)
    if lab[pts[-1]] > lab[target] or pts[-1] != target and instance.classes[pts[-1]] != instance.classes[target]:
        pts = np.append(pts, target)
    return GeodesicPath(pts, lab[u] - lab[pts])


def geodesic_check(instance: MetricInstance, path: GeodesicPath, tol=None, max_points=64, rng=None):
    """
    Largest ``|dist(g(s), g(t)) - |t - s||`` over pairs of path points.

    Long paths are audited on ``max_points`` points (both endpoints always
    included, the rest chosen evenly, or at random when ``rng`` is given).
    Returns ``(deviation, passed)`` where ``passed`` compares to ``tol``
    (default: the five-step label tolerance).
    """
    tol = instance.step_tolerance() if tol is None else tol
    m = len(path.points)
    if m <= max_points:
        pick = np.arange(m)
    elif rng is None:
        pick = np.unique(np.linspace(0, m - 1, max_points).round().astype(int))
    else:
        inner = rng.choice(np.arange(1, m - 1), size=max_points - 2, replace=False)
        pick = np.sort(np.concatenate([[0, m - 1], inner]))
    pts = path.points[pick]
    arc = path.arclength[pick]
    d = instance.matrix(pts)
    dev = float(np.max(np.abs(d - np.abs(arc[:, None] - arc[None, :])))) if m > 1 else 0.0
    return dev, dev <= tol


@dataclass(frozen=True)
class Alignment:
    aligned: bool
    middle: int
    defect: float


def alignment_test(instance: MetricInstance, x, y, z, tol=None) -> Alignment:
    """
    Whether one of three points lies on a geodesic between the other two.

    The candidate middle with the smallest defect
    ``d(a, m) + d(m, b) - d(a, b)`` is reported (first in ``(x, y, z)`` order
    on exact ties).
    """
    tol = instance.step_tolerance() if tol is None else tol
    pts = (int(x), int(y), int(z))
    d = instance.matrix(np.array(pts))
    best = None
    for m in range(3):
        a, b = [i for i in range(3) if i != m]
        defect = float(d[a, m] + d[m, b] - d[a, b])
        if best is None or defect < best[1]:
            best = (m, defect)
    m, defect = best
    return Alignment(bool(defect <= tol), pts[m], defect)


def coalescence_point(instance: MetricInstance):
    """
    The point ``u_**`` where simple geodesics from ``x0`` and ``x1`` merge.

    It is the label minimizer over the contour arc between the two marks that
    does not contain ``s_*``.  Returns ``(grid index, label)``.
    """
    if "x1" not in instance.marks:
        raise ValueError("instance has no x1 mark")
    idx = instance.idx
    r0, r1 = instance.marks["x0"], instance.marks["x1"]
    s = idx.s_star
    n = idx.n
    lo, hi = min(r0, r1), max(r0, r1)
    if lo <= s <= hi:
        # complementary arc wraps: [hi, N] u [0, lo]
        a = idx.label_table.argmin(hi, n)
        b = idx.label_table.argmin(0, lo)
        k = a if idx.labels[a] <= idx.labels[b] else b
    else:
        k = idx.label_table.argmin(lo, hi)
    return int(k), float(idx.labels[k])
