"""Sampling discretised snake trajectories.

Lifetimes are Brownian excursions, exact at grid times: by default the norm
of a 3-d Brownian bridge, or optionally a Gaussian bridge passed through the
Vervaat transform (exact in the continuum, but the grid version rotates at
the grid argmin and so sits slightly low).  Labels are Brownian along the grid tree: one
independent centred Gaussian per Cartesian-tree edge, with variance equal to
the edge length, so ``Cov(tip_i, tip_j) = min zeta[i..j]`` holds exactly on
the grid.

The sigma-finite measure ``N_x`` is handled through its duration density
``t -> (2 sqrt(2 pi t^3))^-1``: integrals ``N_x(F)`` are quadratures over a
geometric grid of durations, each node estimated under ``N_x^(t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import as_rng, replica_rng
from .snake import DiscreteSnake, tree_structure
from .sparse_table import SparseTable
from .stats import Z95, ExperimentReport

ITO_CONSTANT = 1.0 / (2.0 * math.sqrt(2.0 * math.pi))
EXCURSION_METHODS = ("bessel3", "vervaat", "lattice")


@dataclass(frozen=True)
class SampleConfig:
    grid_size: int = 2 ** 14
    duration: float = 1.0
    start_label: float = 0.0
    seed: int = 0
    excursion: str = "bessel3"

    def __post_init__(self):
        if self.excursion not in EXCURSION_METHODS:
            raise ValueError(f"excursion must be one of {EXCURSION_METHODS}, got {self.excursion!r}")
        if int(self.grid_size) < 8:
            raise ValueError(f"grid_size must be >= 8, got {self.grid_size}")
        if not self.duration > 0:
            raise ValueError(f"duration must be positive, got {self.duration}")


def duration_density(t):
    """Density of the duration under ``N_x``."""
    t = np.asarray(t, dtype=float)
    return ITO_CONSTANT * t ** -1.5


def duration_mass_above(t):
    """``N(sigma > t) = 1 / sqrt(2 pi t)``."""
    return 1.0 / np.sqrt(2.0 * np.pi * np.asarray(t, dtype=float))


def sample_durations(rng, size, t_min):
    """Durations drawn from the density restricted to ``(t_min, inf)``, normalised."""
    u = 1.0 - rng.random(size)  # in (0, 1]
    return t_min / u ** 2


def sample_excursion(cfg: SampleConfig, rng=None) -> np.ndarray:
    """Brownian excursion of duration ``cfg.duration`` on ``grid_size + 1`` points."""
    rng = as_rng(cfg.seed if rng is None else rng)
    n = int(cfg.grid_size)
    if cfg.excursion == "bessel3":
        return bessel3_excursion(rng, n, cfg.duration)
    if cfg.excursion == "lattice":
        return lattice_excursion(rng, n, cfg.duration)
    return vervaat_excursion(rng, n, cfg.duration)


def bessel3_excursion(rng, n, duration=1.0) -> np.ndarray:
    """Norm of a 3-d Brownian bridge from 0 to 0: exact excursion marginals at grid times."""
    steps = rng.standard_normal((n, 3)) * math.sqrt(duration / n)
    walk = np.vstack([np.zeros((1, 3)), np.cumsum(steps, axis=0)])
    frac = (np.arange(n + 1) / n)[:, None]
    exc = np.linalg.norm(walk - frac * walk[-1], axis=1)
    exc[0] = exc[-1] = 0.0
    return exc


def vervaat_excursion(rng, n, duration=1.0) -> np.ndarray:
    """Gaussian bridge on the grid rotated at its grid argmin."""
    steps = rng.standard_normal(n) * math.sqrt(duration / n)
    walk = np.concatenate([[0.0], np.cumsum(steps)])
    bridge = walk[:n] - (np.arange(n) / n) * walk[n]
    m = int(np.argmin(bridge))
    exc = np.empty(n + 1)
    exc[:n] = np.roll(bridge, -m) - bridge[m]
    exc[0] = 0.0
    exc[n] = 0.0
    return exc


def lattice_excursion(rng, n, duration=1.0) -> np.ndarray:
    """
    Strictly positive lattice excursion with ``n`` steps (``n`` even), heights
    in units of ``sqrt(duration / n)``.

    Tree vertices are revisited with exactly equal heights, so grid points
    share tree classes as in a discrete plane tree.  An up step, a uniform
    Dyck path of ``n - 2`` steps lifted by one, and a down step; the Dyck
    path comes from the cycle lemma (a shuffled sequence of ``m`` up and
    ``m + 1`` down steps, rotated to start just after its first minimum,
    minus its last step).
    """
    if n % 2 or n < 2:
        raise ValueError(f"lattice excursions need an even number of steps, got {n}")
    m = n // 2 - 1
    steps = np.concatenate([np.ones(m, dtype=np.int64), -np.ones(m + 1, dtype=np.int64)])
    rng.shuffle(steps)
    start = int(np.argmin(np.cumsum(steps))) + 1
    steps = np.concatenate([[1], np.roll(steps, -start)[:2 * m], [-1]])
    heights = np.concatenate([[0], np.cumsum(steps)])
    return heights * math.sqrt(duration / n)


def _ancestor_sums(increments, parent):
    """Sum of ``increments`` along each root path (pointer jumping, last axis)."""
    total = np.array(increments, dtype=float)
    anc = np.where(parent < 0, 0, parent)  # root (index 0) points to itself
    while np.any(anc != 0):
        total = total + total[..., anc]
        anc = anc[anc]
    return total


def assign_labels(lifetime, x, seed=None, replicas=None) -> np.ndarray:
    """
    Gaussian labels for a fixed lifetime array.

    Returns ``N+1`` values, or a ``(replicas, N+1)`` array when ``replicas`` is
    given (all rows share the lifetime, independent labels).
    """
    rng = as_rng(seed)
    zeta = np.asarray(lifetime, dtype=float)
    parent, link = tree_structure(zeta, SparseTable(zeta))
    var = np.where(parent >= 0, zeta - zeta[np.maximum(parent, 0)], 0.0)
    shape = (zeta.size,) if replicas is None else (int(replicas), zeta.size)
    inc = rng.standard_normal(shape) * np.sqrt(var)
    # members of one tree class get bit-equal labels, whatever the summation order
    return (x + _ancestor_sums(inc, parent))[..., link]


def sample_snake(cfg: SampleConfig, rng=None) -> DiscreteSnake:
    """One snake trajectory under ``N_x^(t)`` with ``t = cfg.duration``."""
    rng = as_rng(cfg.seed if rng is None else rng)
    zeta = sample_excursion(cfg, rng)
    tip = assign_labels(zeta, cfg.start_label, rng)
    tip[0] = tip[-1] = cfg.start_label
    return DiscreteSnake(cfg.duration, zeta, tip, cfg.start_label)


def sample_snakes(cfg: SampleConfig, replicas, first=0):
    """Replica ``k`` uses the stream ``replica_rng(cfg.seed, first + k)``."""
    for k in range(int(replicas)):
        yield sample_snake(cfg, replica_rng(cfg.seed, first + k))


def apply_scaling(snake: DiscreteSnake, lam) -> DiscreteSnake:
    """
    The scaling map: durations times ``lam**2``, lifetimes times ``lam``,
    labels times ``sqrt(lam)``.

    Exact inverse by ``1/lam`` whenever ``lam`` and ``sqrt(lam)`` are powers of two.
    """
    if not lam > 0:
        raise ValueError(f"scaling factor must be positive, got {lam}")
    if lam == 1:
        return snake
    root = math.sqrt(lam)
    return DiscreteSnake(snake.sigma * lam * lam, snake.lifetime * lam, snake.tip * root, snake.x * root)


@dataclass(frozen=True)
class DurationMixture:
    """
    Midpoint quadrature in ``log t`` for integrals against the duration density.

    ``weights[k] = density(t_k) * t_k * dlog`` approximates the mass of the
    k-th geometric cell.
    """

    t_grid: np.ndarray
    weights: np.ndarray
    t_min: float
    t_max: float

    @classmethod
    def geometric(cls, t_min=2.0 ** -10, t_max=2.0 ** 10, nodes=40):
        if not (0 < t_min < t_max) or nodes < 1:
            raise ValueError("need 0 < t_min < t_max and at least one node")
        dlog = math.log(t_max / t_min) / nodes
        t = t_min * np.exp(dlog * (np.arange(nodes) + 0.5))
        w = duration_density(t) * t * dlog
        return cls(t, w, float(t_min), float(t_max))

    def __post_init__(self):
        if len(self.t_grid) == 0:
            raise ValueError("empty duration grid")
        if np.any(np.diff(self.t_grid) <= 0) or np.any(np.asarray(self.weights) <= 0):
            raise ValueError("durations must increase and weights must be positive")

    @property
    def mass_above(self) -> float:
        return float(duration_mass_above(self.t_max))

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def free_measure_estimate(functional, mixture: DurationMixture, replicas, seed, *,
                          start_label=0.0, grid_size=2 ** 10, sup_abs=1.0,
                          limit_above=None) -> ExperimentReport:
    """
    Estimate ``N_x(F)`` for a functional ``F(snake)``.

    Each duration node gets ``replicas`` independent snakes under ``N_x^(t)``.
    The mass above ``t_max`` is not sampled: when ``limit_above`` (the value
    of ``E^(t)[F]`` for large ``t``) is given it is added times that mass,
    otherwise the contribution is only bounded by ``sup_abs * mass_above``.
    Below ``t_min`` nothing is added; the node means are reported so the
    size of the neglected lower tail can be judged from ``node_means[0]``.
    """
    if replicas < 2:
        raise ValueError("need at least two replicas per node")
    means = np.empty(len(mixture.t_grid))
    variances = np.empty_like(means)
    for k, t in enumerate(mixture.t_grid):
        cfg = SampleConfig(grid_size, float(t), start_label, seed)
        vals = np.array([functional(s) for s in sample_snakes(cfg, replicas, first=k * replicas)], dtype=float)
        means[k] = vals.mean()
        variances[k] = vals.var(ddof=1)
    estimate = mixture.integrate(means)
    se = float(np.sqrt(np.dot(mixture.weights ** 2, variances / replicas)))
    tail = mixture.mass_above
    if limit_above is not None:
        estimate += limit_above * tail
        tail_bound = 0.0
    else:
        tail_bound = sup_abs * tail
    return ExperimentReport(
        float(estimate), Z95 * se, int(replicas) * len(means), int(seed), se,
        {"node_means": means.tolist(), "t_grid": mixture.t_grid.tolist(),
         "upper_tail_bound": tail_bound, "t_min": mixture.t_min, "t_max": mixture.t_max,
         "grid_size": int(grid_size)},
    )
