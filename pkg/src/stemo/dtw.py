"""Dynamic time warping over growing series prefixes.

Keeps, for every ordered node pair (i, j), the full DP matrix whose (a, b)
cell is DTW(x^i_{0:a}, x^j_{0:b}) with absolute-difference local cost and
the three classic transitions. Tables are extended one observation frame at
a time; extension is exactly equivalent to recomputing from scratch.

Similarity slices are exp(-kappa * DTW) with a zero diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DtwError(ValueError):
    pass


def dtw_full(a, b, band: int | None = None) -> float:
    """Classic DTW distance between two 1-D series.

    ``band`` optionally restricts the warping path to |i - j| <= band
    (Sakoe-Chiba); default is unconstrained.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise DtwError("dtw_full: empty series")
    la, lb = a.size, b.size
    cost = np.full((la, lb), np.inf)
    for i in range(la):
        lo, hi = 0, lb
        if band is not None:
            lo, hi = max(0, i - band), min(lb, i + band + 1)
        for j in range(lo, hi):
            c = abs(a[i] - b[j])
            if i == 0 and j == 0:
                cost[i, j] = c
            elif i == 0:
                cost[i, j] = c + cost[i, j - 1]
            elif j == 0:
                cost[i, j] = c + cost[i - 1, j]
            else:
                cost[i, j] = c + min(cost[i - 1, j], cost[i, j - 1], cost[i - 1, j - 1])
    return float(cost[la - 1, lb - 1])


class DtwTables:
    """Incremental pairwise DTW tables over one episode window.

    ``table[i, j, a, b]`` holds DTW(x^i_{0:a}, x^j_{0:b}) for all frames
    observed so far; unseen cells are +inf. Extension appends row ``t`` and
    column ``t`` for every pair, vectorized across pairs.
    """

    def __init__(self, n: int, horizon: int, band: int | None = None):
        if n < 1 or horizon < 1:
            raise DtwError(f"bad table dimensions n={n}, horizon={horizon}")
        self.n = n
        self.horizon = horizon
        self.band = band
        self.t = -1  # last extended frame
        self.series = np.zeros((n, horizon))
        self.table = np.full((n, n, horizon, horizon), np.inf)

    def extend(self, x_t: np.ndarray):
        """Ingest the frame at time t+1 and grow every pair's DP matrix."""
        x_t = np.asarray(x_t, dtype=np.float64).reshape(-1)
        if x_t.size != self.n:
            raise DtwError(f"extend: got {x_t.size} observations for {self.n} nodes")
        t = self.t + 1
        if t >= self.horizon:
            raise DtwError(f"extend: window horizon {self.horizon} exceeded")
        self.series[:, t] = x_t
        tab = self.table
        # Local costs against every stored frame: cost_row[i, j, b] = |x_t^i - x_b^j|.
        cost_row = np.abs(x_t[:, None, None] - self.series[None, :, : t + 1])
        if t == 0:
            tab[:, :, 0, 0] = cost_row[:, :, 0]
            self.t = 0
            return
        in_band = lambda a, b: self.band is None or abs(a - b) <= self.band
        # New column b = t for a = 0..t-1 first: the row pass needs (t-1, t).
        cost_col = np.abs(self.series[:, : t, None] - x_t[None, None, :]).transpose(0, 2, 1)
        tab[:, :, 0, t] = cost_col[:, :, 0] + tab[:, :, 0, t - 1] if in_band(0, t) else np.inf
        for a in range(1, t):
            if not in_band(a, t):
                tab[:, :, a, t] = np.inf
                continue
            best = np.minimum(tab[:, :, a - 1, t], tab[:, :, a, t - 1])
            np.minimum(best, tab[:, :, a - 1, t - 1], out=best)
            tab[:, :, a, t] = cost_col[:, :, a] + best
        # New row a = t, sweeping b = 0..t (depends on b-1, so sequential in b).
        tab[:, :, t, 0] = cost_row[:, :, 0] + tab[:, :, t - 1, 0] if in_band(t, 0) else np.inf
        for b in range(1, t + 1):
            if not in_band(t, b):
                tab[:, :, t, b] = np.inf
                continue
            best = np.minimum(tab[:, :, t - 1, b], tab[:, :, t, b - 1])
            np.minimum(best, tab[:, :, t - 1, b - 1], out=best)
            tab[:, :, t, b] = cost_row[:, :, b] + best
        self.t = t

    def distance(self, i: int, j: int, a: int, b: int) -> float:
        return float(self.table[i, j, a, b])


@dataclass
class SimilarityStack:
    """Similarity slices for one time t: ``slices[t']`` is the n x n matrix
    exp(-kappa * DTW(x^i_{0:t}, x^j_{0:t'})) with a zero diagonal."""

    t: int
    kappa: float
    slices: np.ndarray  # (t + 1, n, n)

    @property
    def n(self) -> int:
        return self.slices.shape[1]

    def min_over_lags(self) -> np.ndarray:
        """Per-pair minimum similarity across t' <= t (walk transition weights)."""
        return self.slices.min(axis=0)


def build_similarity_stack(tables: DtwTables, t: int, kappa: float) -> SimilarityStack:
    """Similarity slices A_{t, t'} for t' in [0, t] from extended tables."""
    if kappa <= 0:
        raise DtwError(f"kappa must be positive, got {kappa}")
    if tables.t < t:
        raise DtwError(f"tables extended through {tables.t}, requested t={t}")
    # table[i, j, t, t'] = DTW(own prefix through t, neighbor prefix through t').
    dists = tables.table[:, :, t, : t + 1]  # (n, n, t+1)
    slices = np.exp(-kappa * dists).transpose(2, 0, 1).copy()
    idx = np.arange(tables.n)
    slices[:, idx, idx] = 0.0
    return SimilarityStack(t=t, kappa=kappa, slices=slices)


def zero_similarity_stack(n: int, t: int) -> SimilarityStack:
    """All-zero slices (similarity ablation)."""
    return SimilarityStack(t=t, kappa=1.0, slices=np.zeros((t + 1, n, n)))
