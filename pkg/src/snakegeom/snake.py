"""Discretised snake trajectories and the pseudo-distances they carry.

A snake trajectory is stored through its lifetime (contour) array and its
tip (label) array on a uniform grid ``0 = s_0 < ... < s_N = sigma``.  Grid
indices are the only points we ever look at: ``i`` and ``j`` project to the
same tree point iff ``tree_distance(i, j) == 0`` exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .sparse_table import SparseTable


@dataclass(frozen=True)
class FinitePath:
    """A path ``w : [0, lifetime] -> R`` sampled on a uniform grid."""

    values: np.ndarray
    lifetime: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("a path needs at least one value")
        if self.lifetime < 0:
            raise ValueError("lifetime must be nonnegative")
        if self.lifetime == 0 and values.size != 1:
            raise ValueError("a zero-lifetime path has exactly one value")
        object.__setattr__(self, "values", values)

    @property
    def origin(self) -> float:
        return float(self.values[0])

    @property
    def tip(self) -> float:
        return float(self.values[-1])


@dataclass(frozen=True)
class DiscreteSnake:
    """Grid-sampled snake trajectory: ``lifetime[i] = zeta_{s_i}``, ``tip[i] = W^_{s_i}``."""

    sigma: float
    lifetime: np.ndarray
    tip: np.ndarray
    x: float = field(default=None)

    def __post_init__(self):
        zeta = np.array(self.lifetime, dtype=float)
        tip = np.array(self.tip, dtype=float)
        if zeta.ndim != 1 or zeta.shape != tip.shape or zeta.size < 2:
            raise ValueError("lifetime and tip must be 1-D arrays of equal length >= 2")
        if not self.sigma > 0:
            raise ValueError("duration must be positive")
        if np.any(zeta < 0):
            raise ValueError("lifetime must be nonnegative")
        if zeta[0] != 0 or zeta[-1] != 0:
            raise ValueError("lifetime must vanish at both ends")
        x = float(tip[0]) if self.x is None else float(self.x)
        if tip[0] != x or tip[-1] != x:
            raise ValueError("tip must start and end at the starting label")
        zeta.setflags(write=False)
        tip.setflags(write=False)
        object.__setattr__(self, "lifetime", zeta)
        object.__setattr__(self, "tip", tip)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def grid_size(self) -> int:
        return self.lifetime.size - 1

    @property
    def step(self) -> float:
        return self.sigma / self.grid_size

    @property
    def w_star(self) -> float:
        return float(self.tip.min())

    @property
    def s_star(self) -> int:
        return int(np.argmin(self.tip))

    @classmethod
    def point(cls, x=0.0, sigma=1.0):
        """The trivial trajectory: a single point carrying label ``x``."""
        return cls(sigma, np.zeros(2), np.full(2, float(x)), x)

    def save(self, path):
        save_snake(self, path)


class TreeIndex:
    """
    Structural view of the tree coded by a :class:`DiscreteSnake`.

    Holds sparse tables for range minima of lifetime and tip, the grid-scale
    tree classes (smallest index represents its class) and the Cartesian
    parent of every grid point, which is the nearest ancestor on the grid.
    """

    def __init__(self, snake: DiscreteSnake):
        self.snake = snake
        self.n = snake.grid_size
        self.zeta = snake.lifetime
        self.labels = snake.tip
        self.zeta_table = SparseTable(self.zeta)
        self.label_table = SparseTable(self.labels, with_argmin=True)
        self.s_star = self.label_table.argmin(0, self.n)
        self.w_star = float(self.labels[self.s_star])
        self.parent, self.tree_rep = tree_structure(self.zeta, self.zeta_table)

    def _check(self, *indices):
        for i in indices:
            if not 0 <= i <= self.n:
                raise IndexError(f"grid index {i} outside [0, {self.n}]")

    def classes(self):
        """Map from class representative to the sorted list of its grid indices."""
        out = {}
        for i, r in enumerate(self.tree_rep.tolist()):
            out.setdefault(r, []).append(i)
        return out

    def label(self, u) -> float:
        return float(self.labels[u])

    def ancestors(self, i):
        """Grid points on the ancestral line of ``i``, from ``i`` down to the root."""
        self._check(i)
        line = [int(i)]
        while self.parent[line[-1]] >= 0:
            line.append(int(self.parent[line[-1]]))
        return line

    def path_at(self, i, samples=64) -> FinitePath:
        """The snake value ``W_{s_i}`` resampled on a uniform grid of heights."""
        line = self.ancestors(i)[::-1]
        heights = self.zeta[line]
        values = self.labels[line]
        life = float(self.zeta[i])
        if life == 0:
            return FinitePath(np.array([self.labels[i]]), 0.0)
        grid = np.linspace(0.0, life, samples)
        # equal-height ancestors share a class and a label, so interp is well defined
        return FinitePath(np.interp(grid, heights, values), life)


def tree_structure(zeta, table=None):
    """
    Cartesian parent and tree-class representative of every grid index.

    ``i`` and ``j`` are the same tree point iff ``zeta_i == zeta_j == min
    zeta[i..j]``.  The parent of ``i`` is its nearest strict ancestor among
    grid points: whichever of the previous-smaller-or-equal and
    next-strictly-smaller neighbours sits higher (ties go left).  The root
    (index 0) has parent -1.
    """
    zeta = np.asarray(zeta, dtype=float)
    table = table or SparseTable(zeta)
    n1 = zeta.size
    idx = np.arange(n1)
    prev = table.previous_at_most(idx)
    nxt = table.next_at_most(idx, strict=True)
    has_prev = prev >= 0
    has_next = nxt < n1
    zp = np.where(has_prev, zeta[np.maximum(prev, 0)], -np.inf)
    zn = np.where(has_next, zeta[np.minimum(nxt, n1 - 1)], -np.inf)
    parent = np.where(zp >= zn, prev, nxt)
    parent = np.where(has_prev | has_next, parent, -1)

    same = has_prev & (zp == zeta)
    link = np.where(same, prev, idx)
    while True:
        nxt_link = link[link]
        if np.array_equal(nxt_link, link):
            break
        link = nxt_link
    parent.setflags(write=False)
    link.setflags(write=False)
    return parent, link


def tree_distance(idx: TreeIndex, s, t) -> float:
    """Contour pseudo-distance ``zeta_s + zeta_t - 2 min zeta[s..t]``."""
    idx._check(s, t)
    lo, hi = min(s, t), max(s, t)
    return float(idx.zeta[s] + idx.zeta[t] - 2.0 * idx.zeta_table.query(lo, hi))


def interval_min_label(idx: TreeIndex, s, t) -> float:
    """Minimum label over ``[s, t]``, read as ``[s, N] u [0, t]`` when ``t < s``."""
    idx._check(s, t)
    if s <= t:
        return idx.label_table.query(s, t)
    return min(idx.label_table.query(s, idx.n), idx.label_table.query(0, t))


def d_circ(idx: TreeIndex, s, t) -> float:
    """Sphere one-step distance between grid indices ``s`` and ``t``."""
    best = max(interval_min_label(idx, s, t), interval_min_label(idx, t, s))
    return float(idx.labels[s] + idx.labels[t] - 2.0 * best)


def d_tilde(snake, s, t) -> float:
    """Slice one-step distance: no wrapping around the root."""
    if isinstance(snake, TreeIndex):
        snake._check(s, t)
        low = snake.label_table.query(min(s, t), max(s, t))
        tip = snake.labels
    else:
        tip = snake.tip
        n = tip.size - 1
        if not (0 <= s <= n and 0 <= t <= n):
            raise IndexError(f"grid index outside [0, {n}]")
        low = tip[min(s, t): max(s, t) + 1].min()
    return float(tip[s] + tip[t] - 2.0 * low)


def d_tilde_circ(idx: TreeIndex, u, v) -> float:
    """Infimum of :func:`d_tilde` over grid representatives of two tree points."""
    u = [int(a) for a in np.atleast_1d(u)]
    v = [int(b) for b in np.atleast_1d(v)]
    if not u or not v:
        raise ValueError("tree points need at least one grid representative")
    return min(d_tilde(idx, a, b) for a in u for b in v)


def d_circ_row(idx: TreeIndex, s, slice_mode=False) -> np.ndarray:
    """Vector of one-step distances from ``s`` to every grid index."""
    lab = idx.labels
    n1 = lab.size
    fwd = np.minimum.accumulate(lab[s:])           # min lab[s..t], t >= s
    bwd = np.minimum.accumulate(lab[s::-1])[::-1]  # min lab[t..s], t <= s
    inner = np.concatenate([bwd[:-1], fwd])
    if slice_mode:
        return lab[s] + lab - 2.0 * inner
    prefix = np.minimum.accumulate(lab)
    suffix = np.minimum.accumulate(lab[::-1])[::-1]
    t = np.arange(n1)
    # for t > s the wrapping arc is [t, N] u [0, s]; for t < s it is [s, N] u [0, t]
    wrap = np.where(t >= s, np.minimum(suffix, prefix[s]), np.minimum(suffix[s], prefix))
    return lab[s] + lab - 2.0 * np.maximum(inner, wrap)


_BIN_HEADER = struct.Struct("<8sdqd")
_BIN_MAGIC = b"SNAKE001"


def save_snake(snake: DiscreteSnake, path, comments=()):
    """
    Write ``snake`` as CSV (``.csv``) or flat little-endian binary (anything else).

    CSV holds a ``sigma,N,x`` header row followed by ``N+1`` rows ``zeta,tip``;
    floats use ``repr`` so the round-trip is bit-exact.  ``comments`` become
    leading ``#`` lines of the CSV.
    """
    path = Path(path)
    if path.suffix == ".csv":
        lines = [f"# {c}" for c in comments] + ["sigma,N,x", f"{snake.sigma!r},{snake.grid_size},{snake.x!r}", "zeta,tip"]
        lines += [f"{z!r},{w!r}" for z, w in zip(snake.lifetime.tolist(), snake.tip.tolist())]
        path.write_text("\n".join(lines) + "\n")
    else:
        data = np.column_stack([snake.lifetime, snake.tip]).astype("<f8")
        with open(path, "wb") as fh:
            fh.write(_BIN_HEADER.pack(_BIN_MAGIC, snake.sigma, snake.grid_size, snake.x))
            fh.write(data.tobytes())


def load_snake(path) -> DiscreteSnake:
    path = Path(path)
    if path.suffix == ".csv":
        rows = [r for r in path.read_text().splitlines() if not r.startswith("#")]
        sigma, n, x = rows[1].split(",")
        body = np.array([[float(a) for a in r.split(",")] for r in rows[3:] if r], dtype=float)
        if body.shape != (int(n) + 1, 2):
            raise ValueError(f"{path}: expected {int(n) + 1} rows, found {body.shape[0]}")
        return DiscreteSnake(float(sigma), body[:, 0], body[:, 1], float(x))
    raw = Path(path).read_bytes()
    magic, sigma, n, x = _BIN_HEADER.unpack_from(raw)
    if magic != _BIN_MAGIC:
        raise ValueError(f"{path}: not a snake file")
    body = np.frombuffer(raw, dtype="<f8", offset=_BIN_HEADER.size).reshape(n + 1, 2)
    return DiscreteSnake(sigma, body[:, 0].copy(), body[:, 1].copy(), x)
