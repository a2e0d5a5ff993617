"""Train/eval orchestration, report emission and run persistence.

A "run" is a directory holding the resolved config, the checkpoint, the
per-episode training log, and, after evaluation, the metrics report and the
front summary. Reports are plain text with stable formatting so the same
config and seed reproduce them byte for byte.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config, save_config
from .data import (DataError, Normalizer, SpatioTemporalDataset, SyntheticSpec, WindowSet,
                   generate_synthetic, ingest_csv, make_windows)
from .graph import build_spatial_adjacency
from .metrics import (FrontPoint, ParetoFront, hypervolume, ha_predict, ha_slot_means,
                      make_reference, mape, nondominated_mask, rmse, spacing)
from .policy import StemoModel, Trainer, discover_preference, run_episode

FIXED_TAU_FRACS = (0.25, 0.5, 0.75, 1.0)


@dataclass
class Prepared:
    dataset: SpatioTemporalDataset
    normalizer: Normalizer
    windows: WindowSet
    adj: object

    @property
    def n(self) -> int:
        return self.dataset.n


def build_dataset(cfg: ExperimentConfig) -> SpatioTemporalDataset:
    if cfg.source == "synth":
        spec = SyntheticSpec(kind=cfg.synth_kind, n=cfg.synth_n, length=cfg.synth_length,
                             sigma=cfg.synth_sigma, changepoint=cfg.synth_changepoint,
                             period=cfg.synth_period, max_lag=cfg.synth_max_lag)
        return generate_synthetic(spec, cfg.seed)
    return ingest_csv(cfg.values_csv, cfg.geo_csv, ha_period=cfg.ha_period)


def prepare(cfg: ExperimentConfig) -> Prepared:
    cfg.validate()
    dataset = build_dataset(cfg)
    train_end = int(np.floor(dataset.length * cfg.train_frac))
    normalizer = Normalizer(dataset.series, train_end)
    normalized = normalizer.transform(dataset.series)
    windows = make_windows(normalized, cfg.T, cfg.train_frac, cfg.val_frac)
    if len(windows.train_starts) == 0 or len(windows.test_starts) == 0:
        raise DataError("dataset too short for the requested horizon and splits")
    eta = cfg.eta if cfg.eta > 0 else None
    adj = build_spatial_adjacency(dataset.graph, eta)
    return Prepared(dataset=dataset, normalizer=normalizer, windows=windows, adj=adj)


def new_model(cfg: ExperimentConfig, prepared: Prepared) -> StemoModel:
    rng = np.random.default_rng(cfg.seed + 1)
    return StemoModel(prepared.n, cfg, rng)


def train_run(cfg: ExperimentConfig, outdir: Path | str | None = None):
    """Train a model per the config; optionally persist the run directory."""
    prepared = prepare(cfg)
    model = new_model(cfg, prepared)
    trainer = Trainer(model, prepared.adj,
                      prepared.windows.windows(prepared.windows.train_starts),
                      prepared.windows.windows(prepared.windows.val_starts),
                      cfg)
    log = trainer.train()
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        save_config(cfg, outdir / "config.txt")
        model.save(outdir / "checkpoint.npz")
        write_training_log(log, outdir / "training_log.csv")
    return model, prepared, log


def load_run(rundir: Path | str):
    rundir = Path(rundir)
    cfg = load_config(rundir / "config.txt")
    prepared = prepare(cfg)
    model = new_model(cfg, prepared)
    model.load(rundir / "checkpoint.npz")
    return cfg, model, prepared


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass
class EvalResult:
    method: str
    omega: np.ndarray | None
    mae: float
    rmse: float
    mape: float
    used_time_pct: float
    halt_times: np.ndarray   # (windows, n)

    def front_point(self) -> FrontPoint:
        return FrontPoint(error=self.mae, used_time_pct=self.used_time_pct,
                          omega=self.omega, label=self.method)


def evaluate_model(model: StemoModel, prepared: Prepared, cfg: ExperimentConfig,
                   omega: np.ndarray | None = None, fixed_tau: int | None = None,
                   split: str = "test", method: str = "stemo") -> EvalResult:
    """Greedy rollouts over a split; errors reported in original units."""
    windows = prepared.windows
    starts = {"train": windows.train_starts, "val": windows.val_starts,
              "test": windows.test_starts}[split]
    rng = np.random.default_rng(cfg.seed + 2)
    preds, truths, useds, halts = [], [], [], []
    for s in starts:
        trace, _ = run_episode(model, windows.window(int(s)), omega, prepared.adj, cfg,
                               train=False, rng=rng, fixed_tau=fixed_tau)
        preds.append(prepared.normalizer.inverse(trace.committed))
        truths.append(prepared.normalizer.inverse(trace.truth))
        useds.append(trace.used_time_pct)
        halts.append(trace.halt_times)
    pred = np.concatenate(preds)
    truth = np.concatenate(truths)
    err = pred - truth
    return EvalResult(
        method=method, omega=None if omega is None else np.asarray(omega, dtype=float),
        mae=float(np.mean(np.abs(err))),
        rmse=float(np.sqrt(np.mean(err ** 2))),
        mape=mape(pred, truth),
        used_time_pct=float(np.mean(useds)),
        halt_times=np.array(halts))


def preference_sweep(model: StemoModel, prepared: Prepared, cfg: ExperimentConfig,
                     split: str = "test") -> list[EvalResult]:
    """Evaluate the trained policy across the {(k/10, 1-k/10)} preference grid."""
    results = []
    for k in range(11):
        omega = np.array([k / 10.0, 1.0 - k / 10.0])
        results.append(evaluate_model(model, prepared, cfg, omega=omega, split=split))
    return results


def fixed_time_results(model: StemoModel, prepared: Prepared, cfg: ExperimentConfig,
                       split: str = "test") -> list[EvalResult]:
    taus = sorted({max(0, int(round(cfg.T * f)) - 1) for f in FIXED_TAU_FRACS})
    return [evaluate_model(model, prepared, cfg, fixed_tau=tau, split=split,
                           method=f"fixed_t{tau}")
            for tau in taus]


def ha_result(prepared: Prepared, cfg: ExperimentConfig, split: str = "test") -> EvalResult:
    """Historical average over training slots; uses no window observations."""
    dataset = prepared.dataset
    windows = prepared.windows
    starts = {"train": windows.train_starts, "val": windows.val_starts,
              "test": windows.test_starts}[split]
    slot_means = ha_slot_means(dataset.series, windows.train_end,
                               dataset.slots_per_period)
    target_idx = np.asarray(starts) + cfg.T - 1
    preds = ha_predict(slot_means, target_idx).reshape(-1)
    truth = dataset.series[:, target_idx].T.reshape(-1)
    err = preds - truth
    return EvalResult(method="ha", omega=None,
                      mae=float(np.mean(np.abs(err))),
                      rmse=float(np.sqrt(np.mean(err ** 2))),
                      mape=mape(preds, truth),
                      used_time_pct=0.0,
                      halt_times=np.zeros((len(starts), dataset.n), dtype=np.int64))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None or x == "":
        return ""
    return repr(float(x))


def write_training_log(log, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "omega_acc", "omega_time", "mae",
                         "used_time_pct", "eps", "lambda", "loss"])
        for row in log:
            writer.writerow([row.episode, _fmt(row.omega_acc), _fmt(row.omega_time),
                             _fmt(row.mae), _fmt(row.used_time_pct), _fmt(row.eps),
                             _fmt(row.lam), _fmt(row.loss)])


def write_report(results: list[EvalResult], path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "omega_acc", "omega_time", "mae", "rmse",
                         "mape", "used_time_pct"])
        for r in results:
            oa = "" if r.omega is None else _fmt(r.omega[0])
            ot = "" if r.omega is None else _fmt(r.omega[1])
            writer.writerow([r.method, oa, ot, _fmt(r.mae), _fmt(r.rmse),
                             _fmt(r.mape), _fmt(r.used_time_pct)])


def front_summary(results: list[EvalResult]) -> dict:
    """Per-method hypervolume/spacing against the run's worst observed point."""
    groups: dict[str, list[FrontPoint]] = {}
    for r in results:
        name = r.method.split("_t")[0] if r.method.startswith("fixed_t") else r.method
        groups.setdefault(name, []).append(r.front_point())
    reference = make_reference([p for pts in groups.values() for p in pts], pad=1e-9)
    summary = {"reference": [float(reference[0]), float(reference[1])], "methods": {}}
    for name, pts in groups.items():
        front = ParetoFront(points=pts, reference=reference)
        entry = {"hv": hypervolume(front), "points": len(pts)}
        xy = front.matrix()
        nd = int(nondominated_mask(xy).sum()) if len(pts) > 1 else len(pts)
        entry["spacing"] = spacing(front) if len(pts) >= 2 else None
        entry["nondominated"] = nd
        summary["methods"][name] = entry
    return summary


def write_summary(summary: dict, path):
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def pareto_report(model: StemoModel, prepared: Prepared, cfg: ExperimentConfig,
                  outdir: Path | str | None = None, split: str = "test"):
    """Preference sweep plus baselines, written as report.csv and summary.json."""
    results: list[EvalResult] = []
    if cfg.fixed_policy < 0:
        results.extend(preference_sweep(model, prepared, cfg, split=split))
    else:
        results.append(evaluate_model(model, prepared, cfg, fixed_tau=cfg.fixed_policy,
                                      split=split, method=f"fixed_t{cfg.fixed_policy}"))
    results.extend(fixed_time_results(model, prepared, cfg, split=split))
    results.append(ha_result(prepared, cfg, split=split))
    summary = front_summary(results)
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        write_report(results, outdir / "report.csv")
        write_summary(summary, outdir / "summary.json")
    return results, summary


def run_experiment(cfg: ExperimentConfig, outdir: Path | str):
    """Train, checkpoint, sweep preferences and emit every report."""
    outdir = Path(outdir)
    model, prepared, log = train_run(cfg, outdir)
    results, summary = pareto_report(model, prepared, cfg, outdir)
    return model, prepared, results, summary


# ---------------------------------------------------------------------------
# Hidden-preference discovery
# ---------------------------------------------------------------------------


def make_scalar_env(model: StemoModel, prepared: Prepared, cfg: ExperimentConfig,
                    omega_star: np.ndarray, seed: int, split: str = "val"):
    """Environment returning only the hidden-preference scalarized return.

    Each call rolls one greedy episode conditioned on the candidate
    preference on a randomly drawn window of the split.
    """
    windows = prepared.windows
    starts = {"train": windows.train_starts, "val": windows.val_starts,
              "test": windows.test_starts}[split]
    if len(starts) == 0:
        starts = windows.test_starts
    omega_star = np.asarray(omega_star, dtype=float)
    rng = np.random.default_rng(seed)

    def score(candidate: np.ndarray) -> float:
        start = int(starts[rng.integers(len(starts))])
        trace, _ = run_episode(model, windows.window(start), candidate, prepared.adj,
                               cfg, train=False, rng=rng)
        return float(omega_star @ trace.returns())

    return score


def discovery_experiment(model: StemoModel, prepared: Prepared, cfg: ExperimentConfig,
                         omega_star: np.ndarray, budget: int = 100,
                         seed: int | None = None) -> np.ndarray:
    seed = cfg.seed + 3 if seed is None else seed
    score = make_scalar_env(model, prepared, cfg, omega_star, seed)
    rng = np.random.default_rng(seed + 1)
    return discover_preference(score, budget, rng)
