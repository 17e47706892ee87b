"""Run configuration: a flat JSON file whose keys are all overridable."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path


@dataclass
class RunConfig:
    lr: float = 1e-4
    batch_size: int = 8
    kernel_size: int = 3
    g_steps_per_d_step: int = 3
    lambda1: float = 0.001
    lambda2: float = 0.001
    lambda3: float = 0.5
    epochs: int = 2
    seed: int = 0
    data_dir: str = "data"
    out_dir: str = "runs"
    n_au: int = 8
    base_channels: int = 32
    n_rrmb: int = 3
    sim_threshold: float = 0.9

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.g_steps_per_d_step < 1:
            raise ValueError("g_steps_per_d_step must be >= 1")
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            raise ValueError("kernel_size must be odd and >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")


CONFIG_KEYS = tuple(f.name for f in fields(RunConfig))


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"config file {path} is not valid JSON: {e}") from e
    return config_from_dict(data, source=str(path))


def config_from_dict(data: dict, source: str = "config") -> RunConfig:
    unknown = set(data) - set(CONFIG_KEYS)
    if unknown:
        raise ValueError(f"{source}: unknown config keys {sorted(unknown)}")
    return RunConfig(**data)


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    """New config with the given keys replaced; None values are ignored."""
    data = cfg.to_dict()
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in CONFIG_KEYS:
            raise ValueError(f"unknown config key: {key}")
        data[key] = value
    return RunConfig(**data)
