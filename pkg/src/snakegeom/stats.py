"""Monte Carlo summaries and the distribution tests used across experiments."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

Z95 = 1.959963984540054
TEST_LEVEL = 0.01


@dataclass
class ExperimentReport:
    """Monte Carlo estimate with its 95% normal-approximation interval."""

    estimate: float
    half_width: float
    replicas: int
    seed: int | None = None
    std_error: float = float("nan")
    extra: dict = field(default_factory=dict)

    @property
    def ci(self):
        return (self.estimate - self.half_width, self.estimate + self.half_width)

    def contains(self, value) -> bool:
        lo, hi = self.ci
        return lo <= value <= hi

    def to_dict(self):
        out = asdict(self)
        out["ci"] = list(self.ci)
        return out


def mean_report(samples, seed=None, **extra) -> ExperimentReport:
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    mean = float(samples.mean())
    se = float(samples.std(ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
    return ExperimentReport(mean, Z95 * se, n, seed, se, dict(extra))


def agree(a: ExperimentReport, b: ExperimentReport) -> bool:
    """True when the gap between two independent estimates is inside their combined 95% interval."""
    combined = Z95 * np.hypot(a.std_error, b.std_error)
    return bool(abs(a.estimate - b.estimate) <= combined)


def z_score(a: ExperimentReport, b: ExperimentReport) -> float:
    return float((a.estimate - b.estimate) / np.hypot(a.std_error, b.std_error))


def ks_two_sample(a, b, level=TEST_LEVEL):
    """Two-sample Kolmogorov-Smirnov test; returns ``(accepted, statistic, pvalue)``."""
    res = stats.ks_2samp(np.asarray(a, float), np.asarray(b, float))
    return bool(res.pvalue > level), float(res.statistic), float(res.pvalue)


def chi_square_uniform(samples, lo, hi, bins=10, level=TEST_LEVEL):
    """Goodness of fit of ``samples`` to the uniform law on ``[lo, hi]``."""
    counts, _ = np.histogram(samples, bins=bins, range=(lo, hi))
    res = stats.chisquare(counts)
    return bool(res.pvalue > level), float(res.statistic), float(res.pvalue)


def chi_square_binned(samples, edges, expected_probs, level=TEST_LEVEL):
    """Binned chi-square of ``samples`` against bin probabilities (renormalised)."""
    counts, _ = np.histogram(samples, bins=edges)
    probs = np.asarray(expected_probs, dtype=float)
    probs = probs / probs.sum()
    expected = probs * counts.sum()
    res = stats.chisquare(counts, expected)
    return bool(res.pvalue > level), float(res.statistic), float(res.pvalue)


def poisson_mean_check(counts, mean, n_se=3.0):
    """
    Compare the empirical mean of ``counts`` with a Poisson mean.

    ``mean`` may be per-replica (array); the standard error uses the Poisson
    variance of the average.
    """
    counts = np.asarray(counts, dtype=float)
    mean = np.broadcast_to(np.asarray(mean, dtype=float), counts.shape)
    se = np.sqrt(mean.sum()) / counts.size
    gap = abs(counts.mean() - mean.mean())
    return bool(gap <= n_se * se), float(gap), float(se)
