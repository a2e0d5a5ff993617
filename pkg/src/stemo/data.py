"""Dataset ingestion, episode windowing and synthetic generators.

CSV ingestion pivots long-format readings to an (n, L) matrix, forward/back
fills gaps (counting them), and checks timestamp uniformity. Windowing cuts
length-T episodes at stride 1 inside chronological train/val/test segments,
never straddling a boundary. Per-node z-score normalization is fitted on
the training segment only and inverted before any reported metric.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .graph import Graph, coords_to_distances


class DataError(ValueError):
    pass


@dataclass
class SpatioTemporalDataset:
    graph: Graph
    series: np.ndarray          # (n, L) raw values
    timestamps: np.ndarray      # (L,) int64 index or epoch seconds
    slots_per_period: int = 0   # for the historical-average baseline; 0 = unknown
    missing_filled: int = 0
    name: str = "dataset"

    @property
    def n(self) -> int:
        return self.series.shape[0]

    @property
    def length(self) -> int:
        return self.series.shape[1]


class Normalizer:
    """Per-node z-score fitted on the training frames only."""

    def __init__(self, series: np.ndarray, train_end: int):
        train = series[:, :train_end]
        self.mean = train.mean(axis=1, keepdims=True)
        std = train.std(axis=1, keepdims=True)
        std[std < 1e-8] = 1.0
        self.std = std

    def transform(self, series: np.ndarray) -> np.ndarray:
        return (series - self.mean) / self.std

    def inverse(self, values: np.ndarray, nodes: np.ndarray | slice = slice(None)) -> np.ndarray:
        return values * self.std[nodes, 0] + self.mean[nodes, 0]


@dataclass
class WindowSet:
    """Episode start indices per chronological split, over one series matrix."""

    series: np.ndarray          # (n, L), usually normalized
    horizon: int
    train_starts: np.ndarray
    val_starts: np.ndarray
    test_starts: np.ndarray
    train_end: int
    val_end: int

    def window(self, start: int) -> np.ndarray:
        return self.series[:, start:start + self.horizon]

    def windows(self, starts) -> list[np.ndarray]:
        return [self.window(int(s)) for s in starts]


def make_windows(series: np.ndarray, horizon: int,
                 train_frac: float = 0.7, val_frac: float = 0.1) -> WindowSet:
    """Stride-1 windows whose frames stay inside one chronological segment."""
    n, length = series.shape
    if length < horizon:
        raise DataError(f"series length {length} shorter than horizon {horizon}")
    train_end = int(np.floor(length * train_frac))
    val_end = int(np.floor(length * (train_frac + val_frac)))

    def starts(lo, hi):
        # window [s, s+T) must satisfy lo <= s and s+T <= hi
        return np.arange(lo, max(lo, hi - horizon + 1))

    return WindowSet(
        series=series, horizon=horizon,
        train_starts=starts(0, train_end),
        val_starts=starts(train_end, val_end),
        test_starts=starts(val_end, length),
        train_end=train_end, val_end=val_end)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def _parse_timestamp(raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        pass
    try:
        return float(np.datetime64(raw).astype("datetime64[s]").astype(np.int64))
    except ValueError as exc:
        raise DataError(f"unparseable timestamp {raw!r}") from exc


def read_geo_csv(path) -> tuple[list[str], np.ndarray | None, np.ndarray | None]:
    """Read either a coordinate file (node,x,y) or a distance file (from,to,dist).

    Returns (node_ids, coords, dist); exactly one of coords/dist is set.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip().lower() for h in next(reader)]
        rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    if header == ["node", "x", "y"]:
        ids, xs, ys = [], [], []
        for row in rows:
            if len(row) != 3 or not row[1].strip() or not row[2].strip():
                raise DataError(f"missing coordinate for node {row[0]!r}")
            ids.append(row[0].strip())
            xs.append(float(row[1]))
            ys.append(float(row[2]))
        return ids, np.column_stack([xs, ys]), None
    if header == ["from", "to", "dist"]:
        ids = sorted({row[0].strip() for row in rows} | {row[1].strip() for row in rows})
        index = {v: i for i, v in enumerate(ids)}
        n = len(ids)
        dist = np.full((n, n), np.nan)
        np.fill_diagonal(dist, 0.0)
        for row in rows:
            i, j, d = index[row[0].strip()], index[row[1].strip()], float(row[2])
            dist[i, j] = d
            if np.isnan(dist[j, i]):
                dist[j, i] = d
        if np.any(np.isnan(dist)):
            i, j = np.argwhere(np.isnan(dist))[0]
            raise DataError(f"distance missing for pair ({ids[i]}, {ids[j]})")
        return ids, None, dist
    raise DataError(f"unrecognized geo header {header} in {path}")


def ingest_csv(values_path, geo_path, ha_period: int = 0) -> SpatioTemporalDataset:
    """Long-format readings plus a coordinate or distance file.

    Values header must be ``timestamp,node,value``. Gaps are forward- then
    back-filled per node and counted; non-uniform timestamps fail with the
    first offending row.
    """
    ids, coords, dist = read_geo_csv(geo_path)
    index = {v: i for i, v in enumerate(ids)}
    if dist is None:
        dist = coords_to_distances(coords)

    cells: dict[float, dict[int, float]] = {}
    with open(values_path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip().lower() for h in next(reader)]
        if header != ["timestamp", "node", "value"]:
            raise DataError(f"values header must be timestamp,node,value, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or not any(cell.strip() for cell in row):
                continue
            ts = _parse_timestamp(row[0].strip())
            node = row[1].strip()
            if node not in index:
                raise DataError(f"{values_path}:{lineno}: unknown node id {node!r}")
            val = row[2].strip()
            cells.setdefault(ts, {})[index[node]] = float(val) if val else np.nan

    times = np.array(sorted(cells))
    if times.size < 2:
        raise DataError("need at least two timestamps")
    steps = np.diff(times)
    if not np.allclose(steps, steps[0]):
        bad = int(np.argmax(~np.isclose(steps, steps[0]))) + 1
        raise DataError(f"non-uniform timestamps: interval changes at t={times[bad]}")
    interval = float(steps[0])

    n = len(ids)
    series = np.full((n, times.size), np.nan)
    for col, ts in enumerate(times):
        for node_idx, val in cells[ts].items():
            series[node_idx, col] = val

    missing = int(np.isnan(series).sum())
    for i in range(n):
        row = series[i]
        isnan = np.isnan(row)
        if isnan.all():
            raise DataError(f"node {ids[i]} has no observations")
        if isnan.any():
            idx = np.where(~isnan, np.arange(row.size), 0)
            np.maximum.accumulate(idx, out=idx)
            row[:] = row[idx]                      # forward fill
            first = np.argmax(~np.isnan(row))
            row[:first] = row[first]               # back fill the head

    if ha_period <= 0 and interval > 0:
        day = 86400.0 / interval
        ha_period = int(round(day)) if abs(day - round(day)) < 1e-6 and day >= 1 else 0

    graph = Graph(node_ids=ids, dist=dist, coords=coords)
    return SpatioTemporalDataset(graph=graph, series=series, timestamps=times,
                                 slots_per_period=ha_period, missing_filled=missing,
                                 name="csv")


def write_dataset_csv(dataset: SpatioTemporalDataset, values_path, geo_path):
    """Emit the values/coordinates files the ingestion side reads."""
    with open(values_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "node", "value"])
        for col, ts in enumerate(dataset.timestamps):
            for i, node in enumerate(dataset.graph.node_ids):
                writer.writerow([f"{ts:.0f}", node, repr(float(dataset.series[i, col]))])
    with open(geo_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if dataset.graph.coords is not None:
            writer.writerow(["node", "x", "y"])
            for node, (x, y) in zip(dataset.graph.node_ids, dataset.graph.coords):
                writer.writerow([node, repr(float(x)), repr(float(y))])
        else:
            writer.writerow(["from", "to", "dist"])
            ids = dataset.graph.node_ids
            for i in range(len(ids)):
                for j in range(i + 1, len(ids)):
                    writer.writerow([ids[i], ids[j], repr(float(dataset.graph.dist[i, j]))])


# ---------------------------------------------------------------------------
# Synthetic generators
# ---------------------------------------------------------------------------


@dataclass
class SyntheticSpec:
    kind: str = "changepoint"   # changepoint | periodic | diffusion_ramp
    n: int = 6
    length: int = 768
    sigma: float = 0.1
    changepoint: int = 4
    period: int = 12
    max_lag: int = 3


def _lag_coords(n: int, lags: np.ndarray) -> np.ndarray:
    # Nodes sharing a lag cluster spatially; index jitter keeps points distinct.
    return np.column_stack([lags + 0.05 * np.arange(n), 0.25 * (np.arange(n) % 2)])


def generate_synthetic(spec: SyntheticSpec, seed: int) -> SpatioTemporalDataset:
    """Deterministic synthetic datasets keyed by (spec, seed)."""
    rng = np.random.default_rng(seed)
    if spec.kind == "changepoint":
        return _gen_changepoint(spec, rng)
    if spec.kind == "periodic":
        return _gen_periodic(spec, rng)
    if spec.kind == "diffusion_ramp":
        return _gen_diffusion_ramp(spec, rng)
    raise DataError(f"unknown synthetic kind {spec.kind!r}")


def _gen_changepoint(spec: SyntheticSpec, rng: np.random.Generator) -> SpatioTemporalDataset:
    """Blocks of flat, noise-offset levels that ramp deterministically to a target.

    Time is tiled into blocks of ``period`` frames. Each block k carries a
    shared latent target tau_k; node i holds its previous target (its flat
    level) until phase changepoint + lag_i, then ramps over two frames to
    c_i * tau_k + sigma * xi_{k,i} and holds that plateau for the rest of
    the block. Upstream (lag 0) nodes ramp first, so spatial/temporal mixing
    lets lagged nodes forecast their own plateau early; once a node's ramp
    is visible its future frames carry no new information, which is what
    makes early halting profitable. The flat phase carries small
    observation noise (sigma / 10).
    """
    n, period = spec.n, spec.period
    ramp = 2
    blocks = int(np.ceil(spec.length / period))
    lags = np.arange(n) % (spec.max_lag + 1)
    onset = spec.changepoint + lags                    # first ramp phase per node
    if np.any(onset + ramp > period - 1):
        raise DataError(f"changepoint {spec.changepoint} + max lag leaves no ramp room in period {period}")
    scale = 1.0 + 0.4 * (np.arange(n) / max(n - 1, 1)) - 0.2   # c_i in [0.8, 1.2]
    tau = rng.uniform(1.0, 2.0, size=blocks)
    xi = rng.normal(0.0, 1.0, size=(blocks, n))
    targets = scale[None, :] * tau[:, None] + spec.sigma * xi   # (blocks, n)
    flat_noise = rng.normal(0.0, spec.sigma / 10.0, size=(blocks, n, period))

    series = np.zeros((n, blocks * period))
    prev_target = scale * 1.5
    for k in range(blocks):
        for i in range(n):
            level = prev_target[i]
            target = targets[k, i]
            p0 = onset[i]
            seg = np.empty(period)
            seg[:p0] = level + flat_noise[k, i, :p0]
            seg[p0:p0 + ramp + 1] = level + (target - level) * (np.arange(ramp + 1) / ramp)
            seg[p0 + ramp:] = target
            series[i, k * period:(k + 1) * period] = seg
        prev_target = targets[k]
    series = series[:, :spec.length]

    coords = _lag_coords(n, lags.astype(float))
    graph = Graph(node_ids=[f"n{i}" for i in range(n)], dist=coords_to_distances(coords),
                  coords=coords)
    return SpatioTemporalDataset(graph=graph, series=series,
                                 timestamps=np.arange(spec.length, dtype=float),
                                 slots_per_period=period, name="changepoint")


def _gen_periodic(spec: SyntheticSpec, rng: np.random.Generator) -> SpatioTemporalDataset:
    """Per-node sinusoids with the spec's period plus optional noise."""
    n = spec.n
    t = np.arange(spec.length)
    amp = rng.uniform(0.5, 1.5, size=n)
    phase = rng.uniform(0, 2 * np.pi, size=n)
    base = rng.uniform(-0.5, 0.5, size=n)
    series = amp[:, None] * np.sin(2 * np.pi * t[None, :] / spec.period + phase[:, None]) \
        + base[:, None] + rng.normal(0.0, spec.sigma, size=(n, spec.length))
    coords = rng.uniform(0, 1, size=(n, 2))
    graph = Graph(node_ids=[f"n{i}" for i in range(n)], dist=coords_to_distances(coords),
                  coords=coords)
    return SpatioTemporalDataset(graph=graph, series=series,
                                 timestamps=np.arange(spec.length, dtype=float),
                                 slots_per_period=spec.period, name="periodic")


def _gen_diffusion_ramp(spec: SyntheticSpec, rng: np.random.Generator) -> SpatioTemporalDataset:
    """A common piecewise-linear signal reaching each node with its lag."""
    n = spec.n
    lags = np.arange(n) % (spec.max_lag + 1)
    pad = int(lags.max())
    anchors = rng.uniform(0.0, 2.0, size=spec.length // spec.period + 3)
    base = np.interp(np.arange(spec.length + pad) / spec.period,
                     np.arange(anchors.size), anchors)
    series = np.stack([base[pad - lag: pad - lag + spec.length] for lag in lags])
    series = series + rng.normal(0.0, spec.sigma, size=series.shape)
    coords = _lag_coords(n, lags.astype(float))
    graph = Graph(node_ids=[f"n{i}" for i in range(n)], dist=coords_to_distances(coords),
                  coords=coords)
    return SpatioTemporalDataset(graph=graph, series=series,
                                 timestamps=np.arange(spec.length, dtype=float),
                                 slots_per_period=spec.period, name="diffusion_ramp")
