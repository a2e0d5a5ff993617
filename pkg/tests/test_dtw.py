from functools import lru_cache

import numpy as np
import pytest

from stemo.dtw import DtwError, DtwTables, build_similarity_stack, dtw_full


def recursive_dtw(a, b):
    """Textbook recursive definition, memoized: the independent oracle."""
    a = tuple(float(x) for x in a)
    b = tuple(float(x) for x in b)

    @lru_cache(maxsize=None)
    def rec(i, j):
        cost = abs(a[i] - b[j])
        if i == 0 and j == 0:
            return cost
        if i == 0:
            return cost + rec(0, j - 1)
        if j == 0:
            return cost + rec(i - 1, 0)
        return cost + min(rec(i - 1, j), rec(i, j - 1), rec(i - 1, j - 1))

    return rec(len(a) - 1, len(b) - 1)


def test_identity_alignment_zero():
    x = [0.3, 1.1, -2.0, 0.7]
    assert dtw_full(x, x) == 0.0


def test_single_cell():
    assert dtw_full([0.0], [3.0]) == 3.0


def test_warped_repeat_is_free():
    assert dtw_full([1, 2, 3], [1, 2, 2, 3]) == 0.0
    assert recursive_dtw([1, 2, 3], [1, 2, 2, 3]) == 0.0


def test_empty_series_fails():
    with pytest.raises(DtwError, match="empty"):
        dtw_full([], [1.0])


@pytest.mark.parametrize("seed", range(30))
def test_matches_recursive_oracle(seed):
    rng = np.random.default_rng(seed)
    la, lb = rng.integers(1, 9, size=2)
    a = rng.normal(size=la)
    b = rng.normal(size=lb)
    assert dtw_full(a, b) == pytest.approx(recursive_dtw(a, b), abs=0)


def test_incremental_equals_full_recompute():
    rng = np.random.default_rng(1)
    n, horizon = 6, 12
    series = rng.normal(size=(n, horizon))
    tables = DtwTables(n, horizon)
    for t in range(horizon):
        tables.extend(series[:, t])
        for i in range(n):
            for j in range(n):
                for tp in range(t + 1):
                    want = dtw_full(series[i, : t + 1], series[j, : tp + 1])
                    assert tables.distance(i, j, t, tp) == want  # exact equality


def test_extend_observation_count_checked():
    tables = DtwTables(3, 4)
    with pytest.raises(DtwError, match="observations"):
        tables.extend(np.zeros(2))


def test_extend_constant_series_diagonal_zero():
    tables = DtwTables(2, 5)
    for t in range(5):
        tables.extend(np.array([1.0, 1.0]))
        assert tables.distance(0, 0, t, t) == 0.0
        assert tables.distance(0, 1, t, t) == 0.0


def test_similarity_slice_values():
    tables = DtwTables(2, 3)
    tables.extend(np.array([0.0, 0.0]))
    sim = build_similarity_stack(tables, 0, kappa=0.005)
    assert sim.slices[0][0, 1] == 1.0  # zero distance off-diagonal
    assert sim.slices[0][0, 0] == 0.0  # diagonal rule
    assert sim.slices[0][1, 1] == 0.0


def test_similarity_kappa_scaling():
    # kappa = 0.005, DTW distance 200 -> exp(-1)
    tables = DtwTables(2, 2)
    tables.extend(np.array([0.0, 200.0]))
    sim = build_similarity_stack(tables, 0, kappa=0.005)
    assert sim.slices[0][0, 1] == pytest.approx(np.exp(-1.0))


def test_similarity_requires_positive_kappa():
    tables = DtwTables(2, 2)
    tables.extend(np.zeros(2))
    with pytest.raises(DtwError, match="kappa"):
        build_similarity_stack(tables, 0, kappa=0.0)


def test_current_slice_symmetric():
    rng = np.random.default_rng(5)
    n, horizon = 4, 6
    series = rng.normal(size=(n, horizon))
    tables = DtwTables(n, horizon)
    for t in range(horizon):
        tables.extend(series[:, t])
        sim = build_similarity_stack(tables, t, kappa=0.5)
        assert np.allclose(sim.slices[t], sim.slices[t].T)


def test_shift_sensitivity_on_ramp():
    # y is x delayed by k steps; the best-matching prefix of x against y_{0:t}
    # should end around t - k.
    k = 3
    t = 9
    x = np.concatenate([np.zeros(4), np.arange(1, 9, dtype=float)])
    y = np.concatenate([np.zeros(k), x])[: x.size]
    dists = [dtw_full(x[: tp + 1], y[: t + 1]) for tp in range(x.size)]
    best = int(np.argmin(dists))
    assert abs(best - (t - k)) <= 1


def test_sakoe_chiba_band_restricts_path():
    a = [0.0, 0.0, 0.0, 5.0]
    b = [5.0, 0.0, 0.0, 0.0]
    unconstrained = dtw_full(a, b)
    banded = dtw_full(a, b, band=0)  # diagonal-only alignment
    assert banded == pytest.approx(10.0)
    assert banded >= unconstrained
