"""Accuracy metrics, Pareto-front quality metrics and reference baselines.

Front points live in minimization space: (forecast error, used-time
percentage), both lower-better. Hypervolume is the area dominated by the
non-dominated subset up to a caller-chosen reference (the componentwise
worst observed point); spacing is the standard deviation of nearest
neighbour distances within the front as given.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MetricError(ValueError):
    pass


def mae(pred, truth) -> float:
    pred, truth = _paired(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


def rmse(pred, truth) -> float:
    pred, truth = _paired(pred, truth)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def mape(pred, truth, return_skipped: bool = False):
    """Mean absolute percentage error, skipping |truth| < 1e-8 entries."""
    pred, truth = _paired(pred, truth)
    keep = np.abs(truth) >= 1e-8
    skipped = int((~keep).sum())
    if keep.sum() == 0:
        value = float("nan")
    else:
        value = float(np.mean(np.abs((pred[keep] - truth[keep]) / truth[keep])) * 100.0)
    return (value, skipped) if return_skipped else value


def _paired(pred, truth):
    pred = np.asarray(pred, dtype=float).reshape(-1)
    truth = np.asarray(truth, dtype=float).reshape(-1)
    if pred.size == 0 or pred.size != truth.size:
        raise MetricError(f"need equal nonempty inputs, got {pred.size} vs {truth.size}")
    return pred, truth


# ---------------------------------------------------------------------------
# Pareto front
# ---------------------------------------------------------------------------


@dataclass
class FrontPoint:
    error: float
    used_time_pct: float
    omega: np.ndarray | None = None
    label: str = ""

    def xy(self) -> np.ndarray:
        return np.array([self.error, self.used_time_pct])


@dataclass
class ParetoFront:
    points: list[FrontPoint]
    reference: np.ndarray  # componentwise worst, minimization space

    def matrix(self) -> np.ndarray:
        return np.array([p.xy() for p in self.points])


def nondominated_mask(xy: np.ndarray) -> np.ndarray:
    """True where no other point is <= componentwise and < somewhere."""
    n = xy.shape[0]
    keep = np.ones(n, dtype=bool)
    for i in range(n):
        others = np.delete(np.arange(n), i)
        dominated = np.any(
            np.all(xy[others] <= xy[i], axis=1) & np.any(xy[others] < xy[i], axis=1))
        keep[i] = not dominated
    return keep


def hypervolume(front: ParetoFront) -> float:
    """2-D dominated area up to the reference, sweep over the sorted front."""
    xy = front.matrix()
    if xy.size == 0:
        return 0.0
    ref = np.asarray(front.reference, dtype=float)
    outside = np.any(xy > ref + 1e-12, axis=1)
    if np.any(outside):
        bad = [front.points[i] for i in np.where(outside)[0]]
        raise MetricError(f"points outside the reference box {ref.tolist()}: "
                          f"{[(p.error, p.used_time_pct) for p in bad]}")
    xy = xy[nondominated_mask(xy)]
    order = np.argsort(xy[:, 0], kind="stable")
    xy = xy[order]
    area = 0.0
    for i in range(xy.shape[0]):
        right = xy[i + 1, 0] if i + 1 < xy.shape[0] else ref[0]
        area += (right - xy[i, 0]) * (ref[1] - xy[i, 1])
    return float(area)


def spacing(front: ParetoFront) -> float:
    """Std of each point's nearest-neighbour Euclidean distance."""
    xy = front.matrix()
    if xy.shape[0] < 2:
        raise MetricError(f"spacing needs at least 2 points, got {xy.shape[0]}")
    diffs = xy[:, None, :] - xy[None, :, :]
    dist = np.sqrt((diffs ** 2).sum(axis=2))
    np.fill_diagonal(dist, np.inf)
    d = dist.min(axis=1)
    dbar = d.mean()
    return float(np.sqrt(np.sum((dbar - d) ** 2) / (d.size - 1)))


def make_reference(points: list[FrontPoint], pad: float = 0.0) -> np.ndarray:
    if not points:
        raise MetricError("cannot build a reference from zero points")
    xy = np.array([p.xy() for p in points])
    return xy.max(axis=0) + pad


def mae_at_used_time(points: list[FrontPoint], target_pct: float) -> float:
    """Linear interpolation of front error at a used-time operating point."""
    if not points:
        raise MetricError("no points to interpolate")
    xy = sorted((p.used_time_pct, p.error) for p in points)
    us = np.array([u for u, _ in xy])
    es = np.array([e for _, e in xy])
    return float(np.interp(target_pct, us, es))


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


def ha_slot_means(series: np.ndarray, train_end: int, slots_per_period: int) -> np.ndarray:
    """Per-node per-slot training means; empty slots fall back to the node mean."""
    n = series.shape[0]
    train = series[:, :train_end]
    node_mean = train.mean(axis=1)
    if slots_per_period <= 0:
        return np.tile(node_mean[:, None], (1, 1))
    means = np.empty((n, slots_per_period))
    slots = np.arange(train_end) % slots_per_period
    for s in range(slots_per_period):
        cols = slots == s
        means[:, s] = train[:, cols].mean(axis=1) if cols.any() else node_mean
    return means


def ha_predict(slot_means: np.ndarray, frame_indices: np.ndarray) -> np.ndarray:
    """(len(frames), n) historical-average predictions for absolute frame indices."""
    period = slot_means.shape[1]
    slots = np.asarray(frame_indices) % period
    return slot_means[:, slots].T


def fixed_time_front_point(evaluate_at_tau, tau: int, horizon: int) -> FrontPoint:
    """Front point for a trained predictor forced to halt at ``tau`` everywhere.

    ``evaluate_at_tau(tau)`` must return the pooled forecast error; the
    used-time percentage is exact by construction.
    """
    if not 0 <= tau < horizon:
        raise MetricError(f"tau {tau} outside [0, {horizon - 1}]")
    err = float(evaluate_at_tau(tau))
    return FrontPoint(error=err, used_time_pct=100.0 * tau / horizon, label=f"fixed_t{tau}")
