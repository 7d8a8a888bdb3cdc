"""Experiment configuration files (YAML with an explicit schema version)."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

SCHEMA_VERSION = 1
OUTPUT_ENV = "HSLG_OUTPUT_DIR"
STREAM_POLICY = "stream_id = blake2b(experiment)[:24 bits] << 40 | replica_index"


class ConfigError(ValueError):
    pass


def default_output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "hslg-out"))


@dataclass
class ExperimentConfig:
    """Everything that determines a run's outputs; defaults are materialized
    into ``sizes`` before the config is stored."""

    experiment: str
    theta: float = 1.0
    alpha: float = 1.0
    seed: int = 2024
    sizes: dict = field(default_factory=dict)
    output_dir: str | None = None
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "experiment": self.experiment,
            "params": {"theta": self.theta, "alpha": self.alpha},
            "seed": self.seed,
            "rng": {"policy": STREAM_POLICY},
            "sizes": dict(sorted(self.sizes.items())),
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.blake2b(blob, digest_size=6).hexdigest()

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.to_yaml())

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        ver = d.get("schema_version")
        if ver != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {ver!r} (expected {SCHEMA_VERSION})")
        if "experiment" not in d:
            raise ConfigError("config lacks 'experiment'")
        params = d.get("params", {}) or {}
        sizes = d.get("sizes", {}) or {}
        if not isinstance(sizes, dict):
            raise ConfigError("'sizes' must be a mapping")
        try:
            return cls(
                experiment=str(d["experiment"]),
                theta=float(params.get("theta", 1.0)),
                alpha=float(params.get("alpha", 1.0)),
                seed=int(d.get("seed", 2024)),
                sizes=dict(sizes),
                output_dir=d.get("output_dir"),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
            data = yaml.safe_load(text)
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)
