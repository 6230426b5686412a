"""Sparse tables for O(1) range-minimum queries on a frozen array."""

import numpy as np


class SparseTable:
    """
    Range-minimum structure over a 1-D float array.

    ``levels[j][i]`` holds the minimum of ``values[i : i + 2**j]``.  Memory is
    O(N log N); queries are O(1) and vectorise over index arrays.  When
    ``with_argmin`` is set, a parallel table of positions is kept; ties resolve
    to the smallest index.
    """

    def __init__(self, values, with_argmin=False):
        values = np.ascontiguousarray(values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("SparseTable needs a non-empty 1-D array")
        self.values = values
        self.size = values.size
        self.levels = [values]
        self.positions = [np.arange(self.size)] if with_argmin else None
        span = 1
        while 2 * span <= self.size:
            prev = self.levels[-1]
            left = prev[: self.size - 2 * span + 1]
            right = prev[span: span + left.size]
            self.levels.append(np.minimum(left, right))
            if with_argmin:
                pprev = self.positions[-1]
                pleft = pprev[: left.size]
                pright = pprev[span: span + left.size]
                # <= keeps the left (smaller) index on ties
                self.positions.append(np.where(left <= right, pleft, pright))
            span *= 2
        for arr in self.levels:
            arr.setflags(write=False)

    def query(self, lo, hi):
        """Minimum over the closed range ``[lo, hi]`` (``lo <= hi``)."""
        if np.ndim(lo) == 0 and np.ndim(hi) == 0:
            lo, hi = int(lo), int(hi)
            if not 0 <= lo <= hi < self.size:
                raise IndexError(f"bad range [{lo}, {hi}] for size {self.size}")
            j = (hi - lo + 1).bit_length() - 1
            lev = self.levels[j]
            return float(min(lev[lo], lev[hi - (1 << j) + 1]))
        lo = np.asarray(lo, dtype=np.int64)
        hi = np.asarray(hi, dtype=np.int64)
        lo, hi = np.broadcast_arrays(lo, hi)
        if lo.size and (lo.min() < 0 or hi.max() >= self.size or np.any(lo > hi)):
            raise IndexError("range out of bounds")
        out = np.empty(lo.shape)
        j = _bit_length(hi - lo + 1) - 1
        for level in np.unique(j):
            mask = j == level
            lev = self.levels[level]
            a = lo[mask]
            b = hi[mask] - (1 << int(level)) + 1
            out[mask] = np.minimum(lev[a], lev[b])
        return out

    def argmin(self, lo, hi):
        """Smallest index attaining the minimum over ``[lo, hi]``."""
        if self.positions is None:
            raise RuntimeError("table built without argmin support")
        lo, hi = int(lo), int(hi)
        if not 0 <= lo <= hi < self.size:
            raise IndexError(f"bad range [{lo}, {hi}] for size {self.size}")
        j = (hi - lo + 1).bit_length() - 1
        a = lo
        b = hi - (1 << j) + 1
        va, vb = self.levels[j][a], self.levels[j][b]
        return int(self.positions[j][a] if va <= vb else self.positions[j][b])

    def previous_at_most(self, idx, threshold=None, strict=False):
        """
        For each ``i`` in ``idx``, the largest ``k < i`` with
        ``values[k] <= threshold[i]`` (``<`` if ``strict``); -1 if none.

        ``threshold`` defaults to ``values[idx]``.  Binary lifting over the
        table levels, vectorised across queries.
        """
        idx = np.asarray(idx, dtype=np.int64)
        thr = self.values[idx] if threshold is None else np.asarray(threshold, dtype=float)
        pos = idx.copy()  # invariant: no hit in values[pos .. i-1]
        for j in range(len(self.levels) - 1, -1, -1):
            step = 1 << j
            cand = pos - step
            ok = cand >= 0
            c = np.where(ok, cand, 0)
            block = self.levels[j][c]
            hit = block < thr if strict else block <= thr
            pos = np.where(ok & ~hit, cand, pos)
        return pos - 1

    def next_at_most(self, idx, threshold=None, strict=False):
        """Mirror of :meth:`previous_at_most`: smallest ``k > i``; ``size`` if none."""
        idx = np.asarray(idx, dtype=np.int64)
        thr = self.values[idx] if threshold is None else np.asarray(threshold, dtype=float)
        pos = idx.copy()  # invariant: no hit in values[i+1 .. pos]
        for j in range(len(self.levels) - 1, -1, -1):
            step = 1 << j
            start = pos + 1
            ok = start + step <= self.size
            s = np.where(ok, start, 0)
            block = self.levels[j][s]
            hit = block < thr if strict else block <= thr
            pos = np.where(ok & ~hit, pos + step, pos)
        return pos + 1


def _bit_length(arr):
    arr = np.asarray(arr, dtype=np.int64)
    out = np.zeros(arr.shape, dtype=np.int64)
    work = arr.copy()
    while np.any(work > 0):
        nz = work > 0
        out[nz] += 1
        work >>= 1
    return out
