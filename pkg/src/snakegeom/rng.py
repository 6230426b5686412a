"""Reproducible per-replica random streams.

Replica ``k`` of a run seeded with ``master`` draws from a Philox generator
keyed by ``mix64(master, k)``.  ``mix64`` is two rounds of the SplitMix64
finaliser, so neighbouring replica indices get unrelated keys.
"""

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def mix64(master: int, index: int) -> int:
    return splitmix64((int(master) & _MASK) ^ splitmix64(int(index) & _MASK))


def replica_rng(master: int, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=mix64(master, index)))


def as_rng(seed) -> np.random.Generator:
    """Accept a Generator as-is, or build replica 0 of an integer seed."""
    if isinstance(seed, np.random.Generator):
        return seed
    return replica_rng(0 if seed is None else int(seed), 0)
