"""Experiment configuration: a flat dataclass, readable from key = value files.

Every field name is a valid config-file key; CLI overrides use the same
names. Unknown keys and uncoercible values raise ``ConfigError``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # dataset source
    source: str = "synth"             # synth | csv
    synth_kind: str = "changepoint"   # changepoint | periodic | diffusion_ramp
    synth_n: int = 6
    synth_length: int = 768
    synth_sigma: float = 0.1
    synth_changepoint: int = 4
    synth_period: int = 12
    synth_max_lag: int = 3
    values_csv: str = ""
    geo_csv: str = ""
    ha_period: int = 0                # 0 = derive from timestamps

    # dimensions and kernel parameters
    T: int = 12
    h: int = 12
    e: int = 4
    kappa: float = 0.005
    eta: float = 0.0                  # 0 = auto (std of off-diagonal distances)
    p: float = 2.0
    q: float = 0.5
    rho: float = 0.5
    n_pref: int = 16
    batch_size: int = 32
    lr: float = 0.001
    max_episodes: int = 500
    seed: int = 0
    gamma: float = 1.0

    # chronological splits
    train_frac: float = 0.7
    val_frac: float = 0.1

    # RL plumbing
    update_every: int = 2
    replay_capacity: int = 50000
    target_sync: int = 200
    eps_floor: float = 0.05
    eval_every: int = 100
    patience: int = 20
    early_stop: bool = True

    # node embedding walks
    walk_length: int = 8
    walks_per_node: int = 10
    sg_window: int = 3

    # DTW warping-window constraint (-1 = unconstrained)
    dtw_band: int = -1

    # ablations
    no_similarity: bool = False
    no_embedding: bool = False
    fixed_policy: int = -1            # halt step for the "without policy" variant, -1 = off

    def validate(self):
        if self.T < 2:
            raise ConfigError(f"T must be >= 2, got {self.T}")
        if self.source not in ("synth", "csv"):
            raise ConfigError(f"source must be synth or csv, got {self.source!r}")
        if self.source == "csv" and not self.values_csv:
            raise ConfigError("source=csv requires values_csv")
        if not (0 < self.train_frac < 1 and 0 <= self.val_frac < 1
                and self.train_frac + self.val_frac < 1):
            raise ConfigError(f"bad split fractions {self.train_frac}/{self.val_frac}")
        if self.kappa <= 0 or self.p <= 0 or self.q <= 0:
            raise ConfigError("kappa, p and q must be positive")
        if self.fixed_policy >= self.T:
            raise ConfigError(f"fixed_policy step {self.fixed_policy} outside [0, {self.T - 1}]")
        return self


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    if kind in ("bool", bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse bool for {key}: {raw!r}")
    if kind in ("int", int):
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"cannot parse int for {key}: {raw!r}") from exc
    if kind in ("float", float):
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"cannot parse float for {key}: {raw!r}") from exc
    return raw


def apply_overrides(cfg: ExperimentConfig, pairs: list[str]) -> ExperimentConfig:
    """Apply "key=value" strings in place."""
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override must be key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, key, _coerce(key, raw))
    return cfg


def load_config(path) -> ExperimentConfig:
    cfg = ExperimentConfig()
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        setattr(cfg, key, _coerce(key, raw))
    return cfg.validate()


def save_config(cfg: ExperimentConfig, path):
    lines = []
    for f in fields(ExperimentConfig):
        val = getattr(cfg, f.name)
        if isinstance(val, bool):
            val = "true" if val else "false"
        lines.append(f"{f.name} = {val}")
    Path(path).write_text("\n".join(lines) + "\n")
