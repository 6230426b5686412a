"""Spine decompositions: a labelled path with Poisson trees grafted on both sides.

Two constructions are provided.  ``S_a`` has a Brownian spine of height
``a`` started at 0; the slice has a Bessel(-5) spine from 1 absorbed at 0,
and only keeps trees whose minimum stays positive.  On each side, trees are
attached at rate ``2 dt N_{X_t}``; since ``N`` is infinite, trees of
duration at most ``delta`` are dropped, leaving ``2 (height) / sqrt(2 pi
delta)`` atoms per side on average.

Each atom is a grid snake together with its :class:`RefinedMinimum`, so
its continuum minimum can be decided against a threshold (or resolved
exactly) only when a question needs it.

Assembly walks the contour: up the spine visiting left atoms in increasing
height, then down visiting right atoms in decreasing height.  Atom arrays are
copied verbatim, shifted in height by the attach point.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .bessel import FORWARD_STEP, BesselPath, sample_bessel_minus5
from .metric import SLICE, SPHERE, MetricInstance, build_metric
from .refine import DEFAULT_DEPTH, DEFAULT_MARGIN, THRESHOLD_MARGIN, RefinedMinimum
from .rng import as_rng
from .sampler import bessel3_excursion, duration_mass_above, sample_durations
from .snake import DiscreteSnake, TreeIndex, load_snake, save_snake

LEFT, RIGHT = "left", "right"
SA, SLICE_KIND = "Sa", "slice"


class TruncationArtifact(ValueError):
    """A side has no atoms at all; sample again with a smaller ``delta``."""


@dataclass
class Atom:
    """A tree grafted on the spine at ``height`` on ``side``."""

    side: str
    height: float
    snake: DiscreteSnake
    refined: RefinedMinimum | None = field(default=None, repr=False)
    flags: dict = field(default_factory=dict)

    @property
    def duration(self) -> float:
        return self.snake.sigma

    @property
    def root_label(self) -> float:
        return self.snake.x

    @property
    def w_star(self) -> float:
        """Refined minimum found so far (the grid minimum if no refinement is attached)."""
        if self.refined is None:
            return self.flags.get("w_star", self.snake.w_star)
        return self.refined.best

    def below(self, threshold) -> bool:
        """Whether the continuum minimum lies below ``threshold`` (thresholds must decrease)."""
        if self.refined is None:
            return self.snake.w_star < threshold
        return self.refined.run(threshold) < threshold

    def resolve(self) -> float:
        if self.refined is not None:
            self.refined.run()
        return self.w_star


def sample_atom(rng, side, height, x, delta, grid=64, margin=DEFAULT_MARGIN, depth=DEFAULT_DEPTH) -> Atom:
    """A tree under ``N_x( . | sigma > delta)`` on ``grid + 1`` points, with its refinement."""
    t = float(sample_durations(rng, 1, delta)[0])
    zeta = bessel3_excursion(rng, int(grid), t)
    ref = RefinedMinimum(zeta, t, x, rng, margin, t * 2.0 ** -depth)
    tip = ref.grid_labels.copy()
    tip[0] = tip[-1] = x
    return Atom(side, float(height), DiscreteSnake(t, zeta, tip, x), ref)


@dataclass
class SpineTriple:
    """
    Spine path plus left and right atoms.

    ``times``/``values`` contain every attach height exactly, and each atom's
    root label is the spine value there.
    """

    times: np.ndarray
    values: np.ndarray
    left: list
    right: list
    delta: float
    kind: str = SA
    seed: object = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.values = np.asarray(self.values, float)
        if self.times.ndim != 1 or self.times.shape != self.values.shape or self.times.size < 2:
            raise ValueError("spine times and values must be 1-D of equal length >= 2")
        if np.any(np.diff(self.times) <= 0) or self.times[0] != 0:
            raise ValueError("spine times must start at 0 and increase")
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    @property
    def height(self) -> float:
        return float(self.times[-1])

    @property
    def atoms(self):
        return list(self.left) + list(self.right)

    def spine_index(self, t) -> int:
        k = int(np.searchsorted(self.times, t))
        if k >= self.times.size or self.times[k] != t:
            raise KeyError(f"height {t!r} is not a spine grid time")
        return k

    def spine_at(self, t) -> float:
        return float(self.values[self.spine_index(t)])

    def counts(self, lo=0.0, hi=None):
        """Atom counts per side with attach height in ``[lo, hi)``."""
        hi = self.height if hi is None else hi
        return tuple(sum(lo <= a.height < hi for a in side) for side in (self.left, self.right))

    def validate(self):
        for a in self.atoms:
            if a.root_label != self.spine_at(a.height):
                raise ValueError(f"atom at {a.height} starts at {a.root_label}, spine has {self.spine_at(a.height)}")
        return True


def expected_atoms_per_side(length, delta) -> float:
    """``2 * length * N(sigma > delta)``."""
    return 2.0 * float(length) * float(duration_mass_above(delta))


def _place_atoms(rng, lo, hi, delta):
    """Per side: a Poisson count of uniform heights on ``[lo, hi)``, sorted."""
    mean = expected_atoms_per_side(hi - lo, delta)
    return [np.sort(rng.uniform(lo, hi, rng.poisson(mean))) for _ in (LEFT, RIGHT)]


def sample_spine_triple_Sa(a=1.0, delta=1e-4, seed=0, spine_steps=1024, atom_grid=64,
                           margin=DEFAULT_MARGIN, depth=DEFAULT_DEPTH, x=0.0,
                           resolve_side_minima=True) -> SpineTriple:
    """
    The triple coding ``S_a``: Brownian spine on ``[0, a]`` from ``x`` with
    Poisson trees on both sides.

    With ``resolve_side_minima`` the minimum of each side is refined exactly;
    other atoms are only refined far enough to show they do not beat it.
    """
    if not a > 0 or not delta > 0:
        raise ValueError("need a > 0 and delta > 0")
    rng = as_rng(seed)
    heights = _place_atoms(rng, 0.0, a, delta)
    grid = np.linspace(0.0, a, int(spine_steps) + 1)
    times = np.unique(np.concatenate([grid, *heights]))
    inc = rng.standard_normal(times.size - 1) * np.sqrt(np.diff(times))
    values = x + np.concatenate([[0.0], np.cumsum(inc)])
    sides = []
    for side, hs in zip((LEFT, RIGHT), heights):
        at = np.searchsorted(times, hs)
        sides.append([sample_atom(rng, side, h, float(values[k]), delta, atom_grid, margin, depth)
                      for h, k in zip(hs.tolist(), at.tolist())])
    triple = SpineTriple(times, values, sides[0], sides[1], delta, SA, seed,
                         {"a": float(a), "spine_steps": int(spine_steps), "atom_grid": int(atom_grid)})
    if resolve_side_minima:
        for side in (triple.left, triple.right):
            side_minimum(side)
    return triple


def side_minimum(atoms):
    """
    Index and value of the atom with the lowest continuum minimum.

    Atoms are visited by increasing grid minimum; each is refined only until
    it is known not to beat the best so far.
    """
    if not atoms:
        return -1, math.inf
    order = np.argsort([a.snake.w_star for a in atoms], kind="stable")
    best_k, best = int(order[0]), atoms[order[0]].resolve()
    for k in order[1:].tolist():
        if atoms[k].below(best):
            best_k, best = k, atoms[k].resolve()
    return best_k, best


def sample_slice_spine(delta=1e-4, seed=0, step=FORWARD_STEP, atom_grid=64, margin=THRESHOLD_MARGIN,
                       depth=DEFAULT_DEPTH, levels=(), window=None, max_tries=20) -> SpineTriple:
    """
    The slice triple: Bessel(-5) spine from 1 absorbed at 0, with trees of
    positive minimum on both sides.

    Candidate atoms come from ``N_{R_t}( . | sigma > delta)`` and are rejected
    when their minimum is not positive.  ``levels`` are extra positive
    thresholds ``c`` recorded per retained atom as ``flags[c] = W_* < c``.
    ``window = (lo, hi)`` populates only attach heights in that range (the
    spine is still complete); levels listed in ``window`` as strings such as
    ``"tau_0.5"`` refer to first hitting times of the spine.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    levels = sorted({float(c) for c in levels}, reverse=True)
    if any(c <= 0 for c in levels):
        raise ValueError("levels must be positive")
    rng = as_rng(seed)
    hit_levels = set()
    if window is not None:
        hit_levels = {float(w[4:]) for w in window if isinstance(w, str) and w.startswith("tau_")}
    for attempt in range(int(max_tries)):
        path = sample_bessel_minus5(step, rng, levels=sorted(hit_levels))
        lo, hi = _resolve_window(window, path)
        heights = _place_atoms(rng, lo, hi, delta)
        times = np.unique(np.concatenate([path.times, *heights]))
        values = path.at(times)
        values[-1] = 0.0
        sides, rejected, candidates = [], 0, 0
        for side, hs in zip((LEFT, RIGHT), heights):
            at = np.searchsorted(times, hs)
            kept = []
            for h, k in zip(hs.tolist(), at.tolist()):
                candidates += 1
                atom = sample_atom(rng, side, h, float(values[k]), delta, atom_grid, margin, depth)
                # thresholds must decrease: positive levels first, rejection last
                for c in levels:
                    atom.flags[c] = atom.below(c)
                if atom.below(0.0):
                    rejected += 1
                    continue
                kept.append(atom)
            sides.append(kept)
        if candidates == 0 or rejected < candidates:
            break
    else:
        raise RuntimeError(f"every candidate atom rejected in {max_tries} spines (delta={delta}, seed={seed!r})")
    extra = {"tau0": path.end_time, "hits": {str(k): v for k, v in sorted(path.hits.items())},
             "window": [lo, hi], "candidates": candidates, "rejected": rejected,
             "attempts": attempt + 1, "step": float(step), "atom_grid": int(atom_grid)}
    triple = SpineTriple(times, values, sides[0], sides[1], delta, SLICE_KIND, seed, extra)
    triple.path = path
    return triple


def _resolve_window(window, path: BesselPath):
    if window is None:
        return 0.0, path.end_time
    out = []
    for w in window:
        if isinstance(w, str):
            out.append(path.hits[float(w[4:])])
        else:
            out.append(float(w))
    lo, hi = out
    return max(lo, 0.0), min(hi, path.end_time)


@dataclass
class Surface:
    """An assembled triple: the contour snake, its tree and metric, and where each atom landed."""

    idx: TreeIndex
    metric: MetricInstance
    top: int
    segments: list

    def atom_segment(self, side, k):
        for s, j, lo, hi in self.segments:
            if s == side and j == k:
                return lo, hi
        raise KeyError((side, k))

    def atom_of(self, i):
        """``(side, atom index)`` of the atom whose segment contains grid index ``i``, or ``None``."""
        for s, j, lo, hi in self.segments:
            if lo <= i <= hi:
                return s, j
        return None


def assemble_surface(triple: SpineTriple, mode=None) -> Surface:
    """
    Contour of the spine with its grafted trees, as one snake and metric.

    ``mode`` defaults to the sphere metric for ``S_a`` and the slice metric
    for the slice.  Marks: ``x0`` (spine bottom, index 0), ``x1`` (spine top)
    and ``x_star`` (label argmin).
    """
    if mode is None:
        mode = SLICE if triple.kind == SLICE_KIND else SPHERE
    t, v = triple.times, triple.values
    by_height = {LEFT: {}, RIGHT: {}}
    for side, atoms in ((LEFT, triple.left), (RIGHT, triple.right)):
        for k, a in enumerate(atoms):
            by_height[side].setdefault(triple.spine_index(a.height), []).append((k, a))

    zeta, tip, segments = [], [], []
    size = 0

    def emit(z, w):
        nonlocal size
        zeta.append(np.asarray(z, float))
        tip.append(np.asarray(w, float))
        size += len(zeta[-1])

    def graft(side, i):
        for k, a in by_height[side].get(i, []):
            segments.append((side, k, size, size + a.snake.lifetime.size - 1))
            emit(t[i] + a.snake.lifetime, a.snake.tip)

    last = t.size - 1
    for i in range(last):
        emit([t[i]], [v[i]])
        graft(LEFT, i)
    top = size
    emit([t[last]], [v[last]])
    graft(LEFT, last)
    graft(RIGHT, last)
    for i in range(last - 1, -1, -1):
        emit([t[i]], [v[i]])
        graft(RIGHT, i)
    if 0 in by_height[RIGHT]:
        # close the contour after trees grafted at the root
        emit([0.0], [v[0]])

    zeta = np.concatenate(zeta)
    tip = np.concatenate(tip)
    sigma = 2.0 * triple.height + sum(a.duration for a in triple.atoms)
    snake = DiscreteSnake(sigma, zeta, tip, float(v[0]))
    idx = TreeIndex(snake)
    metric = build_metric(idx, mode=mode, x1=top)
    return Surface(idx, metric, top, segments)


@dataclass(frozen=True)
class WMin:
    """The tree containing ``u_**``: ``side`` and ``index`` of the atom, with both side minima."""

    side: str
    index: int
    w_min: float
    lower_side: str
    lower_index: int
    w_lower: float
    spine_min: float

    @property
    def on_spine(self) -> bool:
        return self.side == "spine"


def locate_w_min(triple: SpineTriple) -> WMin:
    """
    Side minima of an ``S_1`` triple: ``u_*`` lies in the lower, ``u_**`` in
    the higher.

    When the higher side minimum is not below the spine minimum, ``u_**`` is
    on the spine and ``side == "spine"`` is returned with ``index = -1``.
    """
    if not triple.left or not triple.right:
        raise TruncationArtifact(f"a side has no atoms at delta={triple.delta}; use a smaller delta")
    kl, wl = side_minimum(triple.left)
    kr, wr = side_minimum(triple.right)
    spine_min = float(triple.values.min())
    (ls, lk, lw), (hs, hk, hw) = sorted([(LEFT, kl, wl), (RIGHT, kr, wr)], key=lambda r: r[2])
    if hw >= spine_min:
        hs, hk, hw = "spine", -1, spine_min
    return WMin(hs, hk, hw, ls, lk, lw, spine_min)


def side_min_exponent(times, values, m):
    """``I(m) = int (X_t - m)^-2 dt`` over the spine (trapezoid), for ``m`` below the spine."""
    return float(np.trapezoid((values - m) ** -2.0, times))


def w_min_pit(triple: SpineTriple, w: WMin | None = None) -> float:
    """
    Probability integral transform of the higher side minimum given the spine.

    Each side minimum satisfies ``P(min >= m) = exp(-3 I(m))``, so the higher
    one has distribution function ``(1 - exp(-3 I(m)))**2``.
    """
    w = locate_w_min(triple) if w is None else w
    if w.on_spine:
        return 1.0
    return float((1.0 - math.exp(-3.0 * side_min_exponent(triple.times, triple.values, w.w_min))) ** 2)


def w_lower_pit(triple: SpineTriple, w: WMin | None = None) -> float:
    """Same for the lower side minimum: ``P(min of both < m) = 1 - exp(-6 I(m))``."""
    w = locate_w_min(triple) if w is None else w
    return float(1.0 - math.exp(-6.0 * side_min_exponent(triple.times, triple.values, w.w_lower)))


def save_triple(triple: SpineTriple, directory, comments=()):
    """Spine CSV, an atom manifest and one binary snake file per atom; ``comments`` head both CSVs."""
    os.makedirs(directory, exist_ok=True)
    head = "".join(f"# {c}\n" for c in comments)
    with open(os.path.join(directory, "spine.csv"), "w", newline="") as fh:
        fh.write(head)
        wr = csv.writer(fh)
        wr.writerow(["t", "value"])
        wr.writerows([repr(a), repr(b)] for a, b in zip(triple.times.tolist(), triple.values.tolist()))
    rows = []
    for side, atoms in ((LEFT, triple.left), (RIGHT, triple.right)):
        for k, a in enumerate(atoms):
            name = f"atom_{side}_{k:05d}.snk"
            save_snake(a.snake, os.path.join(directory, name))
            rows.append([side, repr(a.height), repr(a.w_star), name])
    with open(os.path.join(directory, "atoms.csv"), "w", newline="") as fh:
        fh.write(head)
        wr = csv.writer(fh)
        wr.writerow(["side", "height", "w_star", "file"])
        wr.writerows(rows)
    meta = {"delta": triple.delta, "kind": triple.kind, "seed": triple.seed, "extra": triple.extra}
    with open(os.path.join(directory, "triple.json"), "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1, default=str)


def load_triple(directory) -> SpineTriple:
    """Inverse of :func:`save_triple`; atoms come back without their refinement state."""
    with open(os.path.join(directory, "triple.json")) as fh:
        meta = json.load(fh)
    with open(os.path.join(directory, "spine.csv")) as fh:
        rows = list(csv.reader(r for r in fh if not r.startswith("#")))[1:]
    times = np.array([float(r[0]) for r in rows])
    values = np.array([float(r[1]) for r in rows])
    sides = {LEFT: [], RIGHT: []}
    with open(os.path.join(directory, "atoms.csv")) as fh:
        for r in list(csv.reader(r for r in fh if not r.startswith("#")))[1:]:
            snake = load_snake(os.path.join(directory, r[3]))
            sides[r[0]].append(Atom(r[0], float(r[1]), snake, None, {"w_star": float(r[2])}))
    return SpineTriple(times, values, sides[LEFT], sides[RIGHT], meta["delta"], meta["kind"],
                       meta["seed"], meta["extra"])


def thinning_mean(path: BesselPath, c, lo, hi) -> float:
    """
    ``6 int_lo^hi ((R_t - c)^-2 - R_t^-2) dt``: mean number of retained atoms
    (both sides) with minimum in ``(0, c)``.  Needs ``R > c`` on the window.
    """
    t = np.unique(np.concatenate([path.times[(path.times > lo) & (path.times < hi)], [lo, hi]]))
    r = path.at(t)
    if np.any(r <= c):
        raise ValueError(f"spine dips to {r.min()} <= c={c} inside the window")
    a, b, h = r[:-1], r[1:], np.diff(t)
    # exact on the linear interpolant: int (r - c)^-2 dt = h / ((a - c)(b - c)) on each segment
    return float(6.0 * np.sum(h / ((a - c) * (b - c)) - h / (a * b)))


def slice_window_counts(replicas, seed=0, delta=1e-6, c=0.25, beta=0.5, step=FORWARD_STEP, atom_grid=32):
    """
    Per slice replica on the window ``[0, tau_beta]`` (``beta > c``): all
    atom counts, the expected count, thinned counts of ``W_* in (0, c)`` and
    their expected mean.  Replica ``k`` uses ``replica_rng(seed, k)``.
    """
    from .rng import replica_rng

    if not beta > c > 0:
        raise ValueError("need beta > c > 0")
    out = {k: np.empty(int(replicas)) for k in ("count", "count_mean", "thinned", "thinned_mean")}
    for k in range(int(replicas)):
        tr = sample_slice_spine(delta, replica_rng(seed, k), step, atom_grid, levels=(c,),
                                window=(0.0, f"tau_{beta}"))
        lo, hi = tr.extra["window"]
        out["count"][k] = tr.extra["candidates"]
        out["count_mean"][k] = 2 * expected_atoms_per_side(hi - lo, delta)
        out["thinned"][k] = sum(a.flags[c] for a in tr.atoms)
        out["thinned_mean"][k] = thinning_mean(tr.path, c, lo, hi)
    return out
