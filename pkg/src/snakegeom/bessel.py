"""Bessel processes of dimension -5 and 9.

Both processes use the relative time step ``dt = step * max(R, floor)^2``,
so every octave of R costs about ``1 / step`` steps whatever the scale.

Dimension -5 from 1 solves ``dR = dB - (3 / R) dt`` until it hits 0; it is
integrated by Euler-Maruyama and the absorbing step is cut at the
linearised crossing time.

Dimension 9 from 0 is the norm of a 9-d Brownian motion, so its values at
grid times are exact.  It is transient; the last passage at ``a`` is
declared once the path reaches ``a * return_tol**(-1/7)``, because
``P_L(hit a) = (a / L)**7``.

Between grid times both processes are treated as Brownian bridges for the
purpose of level crossings: a step whose two ends lie above a level crossed
it with probability ``exp(-2 (r0 - a)(r1 - a) / dt)``.  Without this,
discrete monitoring would shift every hitting level by about ``0.58 sqrt(dt)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import as_rng

FORWARD_STEP = 0.001
REVERSED_STEP = 0.005
FLOOR = 1e-2
RETURN_TOL = 1e-6


def exit_level(level, return_tol=RETURN_TOL) -> float:
    """Level from which Bessel(9) returns to ``level`` with probability ``return_tol``."""
    return float(level) * return_tol ** (-1.0 / 7.0)


def return_probability(level, start) -> float:
    """``P_start(Bessel(9) ever hits level)`` for ``start >= level``."""
    return float((level / start) ** 7)


def tau0_mean(start=1.0) -> float:
    """``E[tau_0]`` for Bessel(-5) from ``start``: ``tau_0 = start^2 / (2 G)``, ``G ~ Gamma(7/2)``."""
    return start * start / (2.0 * 2.5)


def tau0_cdf(t, start=1.0):
    """Law of ``tau_0`` (and of ``S_1`` for Bessel(9) from 0): ``P(tau_0 <= t) = P(G >= start^2 / (2t))``."""
    from scipy.special import gammaincc

    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        return gammaincc(3.5, start * start / (2.0 * t))


def bridge_crossed(rng, r0, r1, level, dt):
    """Whether a Brownian bridge between two values above ``level`` dips below it."""
    gap = np.maximum(r0 - level, 0.0) * np.maximum(r1 - level, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(dt > 0, np.exp(-2.0 * gap / np.where(dt > 0, dt, 1.0)), 0.0)
    return rng.random(np.shape(r0)) < p


def minus5_steps(rng, size, step=FORWARD_STEP, start=1.0, floor=FLOOR, max_steps=10 ** 7):
    """
    Vectorised Euler steps of Bessel(-5) from ``start``.

    Yields ``(ids, t0, r0, r1, dt)`` for the replicas still alive.  The
    absorbing step ends exactly at 0, its duration cut to the linearised
    crossing time; the replica is then dropped.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    min_step = step * floor * floor
    slack = 10.0 * math.sqrt(min_step)
    ids = np.arange(size)
    r = np.full(size, float(start))
    t = np.zeros(size)
    for _ in range(max_steps):
        if ids.size == 0:
            return
        dt = step * np.maximum(r * r, floor * floor)
        r1 = r - 3.0 * dt / r + np.sqrt(dt) * rng.standard_normal(ids.size)
        bad = (r1 < -slack) & (dt > min_step)
        if bad.any():
            # too coarse near the boundary: redo those steps at the floor
            dt = np.where(bad, min_step, dt)
            r1 = np.where(bad, r - 3.0 * dt / r + np.sqrt(dt) * rng.standard_normal(ids.size), r1)
        hit = r1 <= 0.0
        if hit.any():
            dt = np.where(hit, dt * r / np.where(hit, r - r1, 1.0), dt)
            r1 = np.where(hit, 0.0, r1)
        yield ids, t, r, r1, dt
        keep = ~hit
        ids, t, r = ids[keep], (t + dt)[keep], r1[keep]
    raise RuntimeError("Bessel(-5) path not absorbed within the step budget")


def nine_steps(rng, size, step=REVERSED_STEP, floor=FLOOR, stop_level=None, max_steps=10 ** 7):
    """
    Vectorised exact steps of Bessel(9) from 0 (norm of a 9-d Gaussian walk).

    Yields ``(ids, t0, x0, x1, dt)`` for live replicas; a replica is dropped
    after its first step ending at or above ``stop_level``.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if stop_level is None:
        raise ValueError("stop_level is required: the process is transient")
    ids = np.arange(size)
    v = np.zeros((size, 9))
    x = np.zeros(size)
    t = np.zeros(size)
    for _ in range(max_steps):
        if ids.size == 0:
            return
        dt = step * np.maximum(x * x, floor * floor)
        v = v + np.sqrt(dt)[:, None] * rng.standard_normal((ids.size, 9))
        x1 = np.sqrt(np.einsum("ij,ij->i", v, v))
        yield ids, t, x, x1, dt
        keep = x1 < stop_level
        ids, t, x, v = ids[keep], (t + dt)[keep], x1[keep], v[keep]
    raise RuntimeError(f"Bessel(9) did not reach the exit level {stop_level} within the step budget")


@dataclass(frozen=True)
class BesselPath:
    """
    A simulated Bessel path on an adaptive time grid.

    ``hits`` maps levels to first hitting times (dimension -5) or last
    passage times (dimension 9); ``end_time`` is ``tau_0`` or ``S_1``.
    """

    dimension: float
    times: np.ndarray
    values: np.ndarray
    hits: dict = field(default_factory=dict)
    end_time: float = float("nan")
    return_bound: float = 0.0

    def __post_init__(self):
        if len(self.times) != len(self.values) or len(self.times) == 0:
            raise ValueError("times and values must be non-empty and of equal length")

    def at(self, t):
        """Linear interpolation of the path at times ``t``."""
        return np.interp(t, self.times, self.values)

    @property
    def maximum(self) -> float:
        return float(np.max(self.values))

    def drift(self, r) -> float:
        """Drift coefficient ``(d - 1) / (2 r)`` of the Bessel SDE."""
        return (self.dimension - 1.0) / (2.0 * r)

    def to_csv(self, path, header=""):
        lines = [f"# {header}"] if header else []
        lines += [f"# {k}={v!r}" for k, v in sorted(self.hits.items())]
        lines += [f"# end_time={self.end_time!r}", f"# return_bound={self.return_bound!r}", "t,value"]
        lines += [f"{a!r},{b!r}" for a, b in zip(self.times.tolist(), self.values.tolist())]
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def sample_bessel_minus5(step=FORWARD_STEP, seed=0, levels=(), start=1.0) -> BesselPath:
    """Bessel(-5) from ``start`` until absorption, with first hitting times of ``levels``."""
    rng = as_rng(seed)
    times, values = [0.0], [float(start)]
    pending = sorted((float(b) for b in levels), reverse=True)
    hits = {b: 0.0 for b in pending if b >= start}
    pending = [b for b in pending if b < start]
    for _, t0, r0, r1, dt in minus5_steps(rng, 1, step, start):
        a, b, h = float(r0[0]), float(r1[0]), float(dt[0])
        while pending and (b < pending[0] or bridge_crossed(rng, r0, r1, pending[0], dt)[0]):
            lev = pending.pop(0)
            frac = (a - lev) / (a - b) if b < lev else 0.5
            hits[lev] = float(t0[0]) + frac * h
        times.append(float(t0[0]) + h)
        values.append(b)
    tau0 = times[-1]
    hits[0.0] = tau0
    return BesselPath(-5.0, np.array(times), np.array(values), hits, tau0)


def sample_bessel9_reversed(step=REVERSED_STEP, seed=0, levels=(1.0,), return_tol=RETURN_TOL) -> BesselPath:
    """
    Bessel(9) from 0 stopped at ``S_1``, its last passage at 1.

    The path is simulated until it reaches the exit level for the highest of
    ``levels`` (and 1); last passages of every level are recorded and the
    returned arrays are cut at ``S_1``.  ``return_bound`` is the probability
    that the true last passage at 1 is later than the one reported.
    """
    rng = as_rng(seed)
    levels = sorted(set(float(b) for b in levels) | {1.0})
    stop = exit_level(max(levels), return_tol)
    times, values = [0.0], [0.0]
    last = {b: 0.0 for b in levels}
    for _, t0, x0, x1, dt in nine_steps(rng, 1, step, stop_level=stop):
        a, b, h = float(x0[0]), float(x1[0]), float(dt[0])
        for lev in levels:
            if b < lev:
                last[lev] = float(t0[0]) + h
            elif a < lev:
                last[lev] = float(t0[0]) + h * (lev - a) / (b - a)
            elif bridge_crossed(rng, x0, x1, lev, dt)[0]:
                last[lev] = float(t0[0]) + 0.5 * h
        times.append(float(t0[0]) + h)
        values.append(b)
    times = np.array(times)
    values = np.array(values)
    s1 = last[1.0]
    cut = int(np.searchsorted(times, s1, side="right"))
    t_out = np.append(times[:cut], s1)
    v_out = np.append(values[:cut], 1.0)
    bound = return_probability(1.0, stop)
    return BesselPath(9.0, t_out, v_out, last, s1, bound)
