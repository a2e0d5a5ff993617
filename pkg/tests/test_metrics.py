import numpy as np
import pytest

from stemo.metrics import (FrontPoint, MetricError, ParetoFront, fixed_time_front_point,
                           ha_predict, ha_slot_means, hypervolume, mae, mae_at_used_time,
                           make_reference, mape, nondominated_mask, rmse, spacing)


def pts(*coords):
    return [FrontPoint(error=e, used_time_pct=u) for e, u in coords]


def front(coords, ref):
    return ParetoFront(points=pts(*coords), reference=np.array(ref, dtype=float))


# ---------------------------------------------------------------------------
# Error metrics
# ---------------------------------------------------------------------------


def test_zero_error_metrics():
    x = np.array([1.0, 2.0, 3.0])
    assert mae(x, x) == 0.0
    assert rmse(x, x) == 0.0
    assert mape(x, x) == 0.0


def test_mae_rmse_arithmetic():
    pred = np.array([3.0, -4.0])
    truth = np.zeros(2)
    assert mae(pred, truth) == pytest.approx(3.5)
    assert rmse(pred, truth) == pytest.approx(3.5355, abs=1e-4)


def test_mape_arithmetic():
    value = mape([3.0, 3.0], [2.0, 4.0])
    assert value == pytest.approx(37.5)


def test_mape_skips_near_zero_truth():
    value, skipped = mape([1.0, 5.0], [0.0, 4.0], return_skipped=True)
    assert skipped == 1
    assert value == pytest.approx(25.0)


def test_empty_inputs_rejected():
    with pytest.raises(MetricError):
        mae([], [])


# ---------------------------------------------------------------------------
# Hypervolume
# ---------------------------------------------------------------------------


def test_hv_single_rectangle():
    assert hypervolume(front([(2.0, 3.0)], [5.0, 7.0])) == pytest.approx(12.0)


def test_hv_point_on_reference():
    assert hypervolume(front([(5.0, 7.0)], [5.0, 7.0])) == 0.0


def test_hv_union_of_two_rectangles():
    assert hypervolume(front([(1.0, 4.0), (3.0, 2.0)], [5.0, 5.0])) == pytest.approx(8.0)


def test_hv_monte_carlo_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        k = rng.integers(1, 10)
        xy = rng.uniform(0, 1, size=(k, 2))
        ref = np.array([1.2, 1.2])
        f = ParetoFront(points=pts(*map(tuple, xy)), reference=ref)
        hv = hypervolume(f)
        samples = rng.uniform(0, 1.2, size=(200_000, 2))
        dominated = np.zeros(samples.shape[0], dtype=bool)
        for p in xy:
            dominated |= np.all(samples >= p, axis=1)
        mc = dominated.mean() * 1.2 * 1.2
        assert abs(hv - mc) <= 0.01 * max(mc, 1e-9) + 3e-3


def test_hv_rejects_point_outside_reference():
    with pytest.raises(MetricError, match="outside"):
        hypervolume(front([(6.0, 1.0)], [5.0, 5.0]))


def test_hv_monotone_in_nondominated_points():
    base = front([(1.0, 4.0), (3.0, 2.0)], [5.0, 5.0])
    more = front([(1.0, 4.0), (3.0, 2.0), (2.0, 3.0)], [5.0, 5.0])
    assert hypervolume(more) >= hypervolume(base)


def test_hv_ignores_dominated_points():
    base = front([(1.0, 4.0), (3.0, 2.0)], [5.0, 5.0])
    extra = front([(1.0, 4.0), (3.0, 2.0), (4.0, 4.5)], [5.0, 5.0])  # dominated
    assert hypervolume(extra) == pytest.approx(hypervolume(base))


def test_nondominated_mask():
    xy = np.array([[1.0, 4.0], [3.0, 2.0], [4.0, 4.5], [1.0, 4.0]])
    mask = nondominated_mask(xy)
    assert mask[0] and mask[1] and not mask[2]


# ---------------------------------------------------------------------------
# Spacing
# ---------------------------------------------------------------------------


def test_spacing_two_points_is_zero():
    assert spacing(front([(0.0, 0.0), (3.0, 1.0)], [9, 9])) == 0.0


def test_spacing_equally_spaced_collinear():
    assert spacing(front([(0, 0), (1, 1), (2, 2)], [9, 9])) == pytest.approx(0.0)


def test_spacing_hand_arithmetic():
    # d = [1, 1, 2], dbar = 4/3, S = sqrt(((1/3)^2 + (1/3)^2 + (2/3)^2) / 2)
    s = spacing(front([(0, 0), (1, 0), (3, 0)], [9, 9]))
    assert s == pytest.approx(0.5773502691896258)


def test_spacing_needs_two_points():
    with pytest.raises(MetricError):
        spacing(front([(0, 0)], [9, 9]))


@pytest.mark.parametrize("seed", range(5))
def test_spacing_rigid_motion_invariant(seed):
    rng = np.random.default_rng(seed)
    xy = rng.uniform(0, 3, size=(6, 2))
    ref = np.array([99.0, 99.0])
    base = spacing(ParetoFront(points=pts(*map(tuple, xy)), reference=ref))
    theta = rng.uniform(0, 2 * np.pi)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    moved = xy @ rot.T + rng.uniform(0, 5, size=2)
    again = spacing(ParetoFront(points=pts(*map(tuple, moved)), reference=ref))
    assert again == pytest.approx(base, abs=1e-9)


def test_make_reference_componentwise_worst():
    ref = make_reference(pts((1.0, 7.0), (4.0, 2.0)))
    assert np.allclose(ref, [4.0, 7.0])


def test_mae_interpolation_at_operating_point():
    points = pts((0.5, 0.0), (0.3, 50.0), (0.1, 100.0))
    assert mae_at_used_time(points, 25.0) == pytest.approx(0.4)
    assert mae_at_used_time(points, 50.0) == pytest.approx(0.3)
    assert mae_at_used_time(points, 120.0) == pytest.approx(0.1)  # clamped


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


def test_ha_constant_series():
    series = np.full((2, 20), 3.7)
    means = ha_slot_means(series, train_end=14, slots_per_period=4)
    preds = ha_predict(means, np.array([15, 18]))
    assert np.allclose(preds, 3.7)


def test_ha_periodic_series_exact():
    period = 4
    slot_values = np.array([1.0, 5.0, 2.0, 8.0])
    series = np.tile(slot_values, (2, 6))  # 24 frames, strictly periodic
    means = ha_slot_means(series, train_end=16, slots_per_period=period)
    idx = np.arange(16, 24)
    preds = ha_predict(means, idx)
    truth = series[:, idx].T
    assert np.allclose(preds, truth)


def test_ha_empty_slot_falls_back_to_node_mean():
    series = np.arange(6, dtype=float)[None, :]
    means = ha_slot_means(series, train_end=3, slots_per_period=5)
    # slots 3 and 4 unseen in training
    assert means[0, 3] == pytest.approx(series[0, :3].mean())
    assert means[0, 4] == pytest.approx(series[0, :3].mean())


def test_fixed_time_front_point():
    point = fixed_time_front_point(lambda tau: 0.25, tau=11, horizon=12)
    assert point.used_time_pct == pytest.approx(100.0 * 11 / 12)
    point0 = fixed_time_front_point(lambda tau: 0.5, tau=0, horizon=12)
    assert point0.used_time_pct == 0.0
    with pytest.raises(MetricError):
        fixed_time_front_point(lambda tau: 0.0, tau=12, horizon=12)
