"""Command-line interface.

Subcommands: synth, train, evaluate, pareto, discover-preference, ablate.
Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, apply_overrides, load_config
from .data import DataError, SyntheticSpec, generate_synthetic, write_dataset_csv
from . import experiment as ex


def _parse_omega(raw: str) -> np.ndarray:
    parts = [float(x) for x in raw.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"preference must be two comma-separated weights, got {raw!r}")
    return np.array(parts)


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    apply_overrides(cfg, args.set or [])
    return cfg.validate()


def cmd_synth(args) -> int:
    spec = SyntheticSpec(kind=args.kind, n=args.n, length=args.length, sigma=args.sigma,
                         changepoint=args.changepoint, period=args.period,
                         max_lag=args.max_lag)
    dataset = generate_synthetic(spec, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset_csv(dataset, out / "values.csv", out / "coords.csv")
    print(f"wrote {dataset.n} nodes x {dataset.length} frames to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    model, prepared, log = ex.train_run(cfg, args.out)
    print(f"trained {len(log)} episodes; run saved to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg, model, prepared = ex.load_run(args.run)
    if args.tau is not None:
        result = ex.evaluate_model(model, prepared, cfg, fixed_tau=args.tau,
                                   split=args.split, method=f"fixed_t{args.tau}")
    else:
        omega = _parse_omega(args.omega)
        result = ex.evaluate_model(model, prepared, cfg, omega=omega, split=args.split)
    print(f"method={result.method} mae={result.mae:.6f} rmse={result.rmse:.6f} "
          f"mape={result.mape:.4f} used_time_pct={result.used_time_pct:.3f}")
    return 0


def cmd_pareto(args) -> int:
    cfg, model, prepared = ex.load_run(args.run)
    outdir = Path(args.out) if args.out else Path(args.run)
    results, summary = ex.pareto_report(model, prepared, cfg, outdir, split=args.split)
    for name, entry in sorted(summary["methods"].items()):
        sp = entry["spacing"]
        sp_txt = f"{sp:.6f}" if sp is not None else "-"
        print(f"{name}: hv={entry['hv']:.6f} spacing={sp_txt} points={entry['points']}")
    return 0


def cmd_discover(args) -> int:
    cfg, model, prepared = ex.load_run(args.run)
    planted = _parse_omega(args.planted)
    recovered = ex.discovery_experiment(model, prepared, cfg, planted,
                                        budget=args.budget, seed=args.seed)
    print(f"planted=({planted[0]:.3f},{planted[1]:.3f}) "
          f"recovered=({recovered[0]:.3f},{recovered[1]:.3f})")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_cfg(args)
    if args.variant == "no_similarity":
        cfg.no_similarity = True
    elif args.variant == "no_embedding":
        cfg.no_embedding = True
    elif args.variant == "fixed_policy":
        if args.tau is None:
            raise ConfigError("fixed_policy ablation needs --tau")
        cfg.fixed_policy = args.tau
    cfg.validate()
    ex.run_experiment(cfg, args.out)
    print(f"ablation {args.variant} complete; reports in {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stemo")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset as CSV")
    p.add_argument("--spec", "--kind", dest="kind", default="changepoint",
                   choices=["changepoint", "periodic", "diffusion_ramp"])
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--length", type=int, default=768)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--changepoint", type=int, default=4)
    p.add_argument("--period", type=int, default=12)
    p.add_argument("--max-lag", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train a model and save the run directory")
    p.add_argument("--config", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a saved run under one preference")
    p.add_argument("--run", required=True)
    p.add_argument("--omega", default="0.5,0.5")
    p.add_argument("--tau", type=int, default=None, help="force a fixed halt step instead")
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("pareto", help="preference sweep, baselines, HV/spacing summary")
    p.add_argument("--run", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.set_defaults(fn=cmd_pareto)

    p = sub.add_parser("discover-preference", help="recover a hidden preference from scalar rewards")
    p.add_argument("--run", required=True)
    p.add_argument("--planted", required=True, help="hidden preference, e.g. 0.67,0.33")
    p.add_argument("--budget", type=int, default=100)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_discover)

    p = sub.add_parser("ablate", help="train and report one ablation variant")
    p.add_argument("--config", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--variant", required=True,
                   choices=["no_similarity", "no_embedding", "fixed_policy"])
    p.add_argument("--tau", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
