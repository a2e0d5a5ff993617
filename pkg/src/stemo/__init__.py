"""Early spatio-temporal forecasting with preference-conditioned
multi-objective Q-learning: per graph node, learn the earliest time to
commit a forecast, trading timeliness against accuracy."""

from .config import ExperimentConfig
from .data import SpatioTemporalDataset, SyntheticSpec, generate_synthetic, ingest_csv
from .experiment import (evaluate_model, load_run, pareto_report, preference_sweep,
                         run_experiment, train_run)
from .policy import StemoModel, run_episode

__all__ = [
    "ExperimentConfig",
    "SpatioTemporalDataset",
    "SyntheticSpec",
    "StemoModel",
    "evaluate_model",
    "generate_synthetic",
    "ingest_csv",
    "load_run",
    "pareto_report",
    "preference_sweep",
    "run_episode",
    "run_experiment",
    "train_run",
]

__version__ = "0.1.0"
