"""Experiment configuration and the run manifest.

A run is described by one JSON file; every command takes ``--config`` and an
output directory.  All randomness derives from the single ``seed`` through
documented labels, so reruns with the same config are bit-identical.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .hyperopt import SearchSpace

REFERENCE_REGIME = (10.0, 28.0, 8.0 / 3.0)
UNSEEN_REGIME = (13.0, 52.0, 2.0)
DEFAULT_GRID = {
    "s": [8.0, 10.0, 12.0, 14.0, 16.0],
    "r": [30.0, 35.0, 40.0, 45.0, 50.0],
    "b": [1.0, 1.5, 2.0, 2.5, 3.0],
}


@dataclass
class RunConfig:
    """Everything a pipeline run needs; see ``default_config`` for the
    reference desk-scale experiment."""

    experiment: str
    seed: int
    dt: float = 0.01
    transient_time: float = 20.0
    grid: dict = field(default_factory=lambda: dict(DEFAULT_GRID))
    n_train: int = 20
    n_validation: int = 5
    washout_time: float = 4.0
    train_time: float = 10.0
    lyapunov_horizon: float = 1000.0
    esn: dict | None = None
    search: dict | None = None
    prediction: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    ensemble: dict = field(default_factory=dict)
    sweeps: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_train < 1 or self.n_validation < 1:
            raise ValueError("need at least one training and one validation regime")
        for key in ("s", "r", "b"):
            if key not in self.grid or not self.grid[key]:
                raise ValueError(f"grid must list values for '{key}'")
        self.prediction = {**_PREDICTION_DEFAULTS, **self.prediction}
        self.stats = {**_STATS_DEFAULTS, **self.stats}
        self.ensemble = {**_ENSEMBLE_DEFAULTS, **self.ensemble}
        self.sweeps = {**_SWEEPS_DEFAULTS, **self.sweeps}
        if self.esn is None and self.search is None:
            self.search = {}

    def search_space(self) -> SearchSpace:
        block = dict(self.search or {})
        for key in ("rho", "sigma_in", "alpha", "tikhonov"):
            if key in block:
                block[key] = tuple(block[key])
        for key in ("sigma_p", "k_p"):
            if key in block:
                block[key] = tuple(tuple(b) for b in block[key])
        if "n_conn_choices" in block and block["n_conn_choices"] is not None:
            block["n_conn_choices"] = tuple(block["n_conn_choices"])
        return SearchSpace(**block)


_PREDICTION_DEFAULTS = {
    "regimes": [list(REFERENCE_REGIME), list(UNSEEN_REGIME)],
    "n_initial_conditions": 20,
    "max_horizon_lt": 10.0,
    "threshold": 0.5,
}
_STATS_DEFAULTS = {
    "regimes": None,  # None -> reference regime + first 3 validation regimes
    "duration_lt": 500.0,
    "true_reference_time": 5000.0,
    "n_bins": 50,
}
_ENSEMBLE_DEFAULTS = {
    "n_members": 2000,
    "window_lt": 0.5,
    "ic_mode": "true_washout",
    "spacing_lt": 1.0,
}
_SWEEPS_DEFAULTS = {
    "base_regime": list(REFERENCE_REGIME),
    "grids": None,  # None -> the data grid
    "degree": 2,
    "duration_lt": 500.0,
}


def default_config(experiment: str = "lorenz-desk", seed: int = 927) -> RunConfig:
    return RunConfig(experiment=experiment, seed=seed)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        raw = json.load(fh)
    return RunConfig(**raw)


def dump_config(config: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(_as_plain(config), sort_keys=True, indent=2) + "\n")


def _as_plain(config: RunConfig) -> dict:
    from dataclasses import asdict

    return asdict(config)


def config_hash(config: RunConfig) -> str:
    """Stable content hash of the canonical JSON serialisation."""
    blob = json.dumps(_as_plain(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class Manifest:
    """Per-output-directory record of every produced artifact.

    Timestamps live only here, never in the CSV outputs, so the data files
    stay byte-identical across reruns.
    """

    def __init__(self, out_dir, config: RunConfig):
        self.path = Path(out_dir) / "manifest.json"
        self.out_dir = Path(out_dir)
        if self.path.exists():
            self.data = json.loads(self.path.read_text())
        else:
            self.data = {"config_hash": config_hash(config), "commands": {}}
        if self.data.get("config_hash") != config_hash(config):
            raise ValueError(
                "output directory was produced with a different configuration"
            )

    def record(self, command: str, outputs) -> None:
        from . import __version__

        self.data["commands"][command] = {
            "version": __version__,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "outputs": sorted(str(Path(p).relative_to(self.out_dir)) for p in outputs),
        }
        self.path.write_text(json.dumps(self.data, sort_keys=True, indent=2) + "\n")

    def outputs_of(self, command: str):
        entry = self.data["commands"].get(command)
        if entry is None:
            return None
        return [self.out_dir / p for p in entry["outputs"]]
