"""Experiment configuration: schema, defaults, validation and JSON round-trip.

A config is a JSON object::

    {
      "map": {"family": "doubling", "multiplier": 2},
      "stages": ["map", "periodic", "source-zooming", "induced", "measures", "stats"],
      "seed": 20240601,
      "output_dir": "out",
      "periodic": {...}, "zooming": {...}, "induced": {...},
      "measures": {...}, "stats": {...},
      "density": {...}, "zooming_scan": {...}, "verify": {...}
    }

Missing sections take the defaults in :data:`DEFAULTS`; unknown keys are
rejected.  Admissible ranges are listed in :data:`RANGES`.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .stats import OBSERVABLES

STAGES = ("map", "periodic", "source-zooming", "induced", "measures", "stats")
MAP_FAMILIES = ("doubling", "linear", "perturbed_example", "power")

DEFAULTS = {
    "periodic": {"period": 1, "grid": 64, "source": None},
    "zooming": {"rate": 0.125, "delta_search": 0.125, "horizon": 20},
    "induced": {"r_fraction": 0.125, "max_R": 8, "n_seeds": 4096, "cell_budget": 2000, "samples_per_cell": 64, "exhaustive_nodes": 65536},
    "measures": {
        "family": "geometric",
        "theta": 0.5,
        "cascade_depth": 3,
        "n_samples": 100_000,
        "bins": 64,
        "invariance_samples": 1_000_000,
        "invariance_observable": "cos2pi",
        "cylinder_depth": 3,
        "threads": 1,
    },
    "stats": {
        "lyapunov_iterates": 1000,
        "lyapunov_samples": 1000,
        "lebesgue_observable": "centered",
        "lebesgue_max_lag": 20,
        "lebesgue_samples": 1_000_000,
        "mu_observable": "cos2pi",
        "mu_max_lag": 40,
        "mu_samples": 200_000,
        "tail_n_max": None,
        "gate_correlations": True,
    },
    "density": {"eps": 0.05, "depth_max": 12, "node_budget": 1_000_000, "point": None},
    "zooming_scan": {"point": None, "rate": 0.5, "delta": 0.125, "n_max": 100},
    "verify": {
        "grid": 512,
        "U1_radius": None,
        "irg_point": None,
        "irg_eps": 0.01,
        "irg_R": 0.1,
        "irg_steps": 20,
        "arcs": 64,
        "arc_length": 0.15,
        "arc_horizon": 12,
    },
}

# (low, high, kind); "open" bounds are strict, None means unbounded
RANGES = {
    ("periodic", "period"): (1, 12, "int"),
    ("periodic", "grid"): (2, 1024, "int"),
    ("zooming", "rate"): (0, 1, "open"),
    ("zooming", "delta_search"): (0, 0.5, "open"),
    ("zooming", "horizon"): (1, 1000, "int"),
    ("induced", "r_fraction"): (0, 0.25, "open"),
    ("induced", "max_R"): (1, 64, "int"),
    ("induced", "n_seeds"): (1, 10**7, "int"),
    ("induced", "cell_budget"): (1, 10**6, "int"),
    ("induced", "samples_per_cell"): (8, 4096, "int"),
    ("induced", "exhaustive_nodes"): (1, 10**8, "int"),
    ("measures", "theta"): (0, 1, "open"),
    ("measures", "cascade_depth"): (0, 16, "int"),
    ("measures", "n_samples"): (100, 10**8, "int"),
    ("measures", "bins"): (2, 4096, "int"),
    ("measures", "invariance_samples"): (100, 10**8, "int"),
    ("measures", "cylinder_depth"): (1, 8, "int"),
    ("measures", "threads"): (1, 256, "int"),
    ("stats", "lyapunov_iterates"): (100, 10**8, "int"),
    ("stats", "lyapunov_samples"): (2, 10**7, "int"),
    ("stats", "lebesgue_max_lag"): (8, 10**4, "int"),
    ("stats", "lebesgue_samples"): (100, 10**8, "int"),
    ("stats", "mu_max_lag"): (8, 10**4, "int"),
    ("stats", "mu_samples"): (100, 10**8, "int"),
    ("stats", "tail_n_max"): (1, 64, "int"),
    ("density", "eps"): (0, None, "open"),
    ("density", "depth_max"): (1, 64, "int"),
    ("density", "node_budget"): (1, 10**9, "int"),
    ("zooming_scan", "rate"): (0, 1, "open"),
    ("zooming_scan", "delta"): (0, 0.5, "open"),
    ("zooming_scan", "n_max"): (1, 10**5, "int"),
    ("verify", "grid"): (8, 4096, "int"),
    ("verify", "U1_radius"): (0, 0.5, "open"),
    ("verify", "irg_eps"): (0, 0.5, "open"),
    ("verify", "irg_R"): (0, 0.5, "open"),
    ("verify", "irg_steps"): (1, 1000, "int"),
    ("verify", "arcs"): (1, 10**5, "int"),
    ("verify", "arc_length"): (0, 1, "open"),
    ("verify", "arc_horizon"): (1, 1000, "int"),
}

CHOICES = {
    ("measures", "family"): ("geometric", "uniform"),
    ("measures", "invariance_observable"): tuple(OBSERVABLES),
    ("stats", "lebesgue_observable"): tuple(OBSERVABLES),
    ("stats", "mu_observable"): tuple(OBSERVABLES),
}


class DependencyError(ConfigError):
    def __init__(self, stage, missing):
        super().__init__(f"stage {stage!r} requires stage(s) {', '.join(repr(m) for m in missing)} earlier in the stage list")
        self.stage = stage
        self.missing = missing


def check_stages(stages) -> list:
    """Stages must be known, unique and each preceded by all of its prerequisites."""
    stages = list(stages)
    if not stages:
        raise ConfigError("stage list is empty")
    for s in stages:
        if s not in STAGES:
            raise ConfigError(f"unknown stage {s!r}; known: {list(STAGES)}")
    if len(set(stages)) != len(stages):
        raise ConfigError("stage list has duplicates")
    for i, s in enumerate(stages):
        needed = STAGES[: STAGES.index(s)]
        missing = [d for d in needed if d not in stages[:i]]
        if missing:
            raise DependencyError(s, missing)
    return stages


BOOLEANS = {("stats", "gate_correlations")}


def _check_value(section, key, value):
    if (section, key) in BOOLEANS:
        if not isinstance(value, bool):
            raise ConfigError(f"{section}.{key} must be true or false")
        return
    if value is None:
        if (section, key) in (("stats", "tail_n_max"), ("verify", "U1_radius")):
            return
        if key in ("source", "point", "irg_point"):
            return
        raise ConfigError(f"{section}.{key} must not be null")
    if (section, key) in CHOICES:
        if value not in CHOICES[section, key]:
            raise ConfigError(f"{section}.{key} = {value!r} not in {list(CHOICES[section, key])}")
        return
    if key in ("source", "point", "irg_point"):
        if not (isinstance(value, list) and value and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
            raise ConfigError(f"{section}.{key} must be a list of numbers")
        return
    lo, hi, kind = RANGES[section, key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key} must be a number, got {value!r}")
    if kind == "int":
        if not isinstance(value, int):
            raise ConfigError(f"{section}.{key} must be an integer, got {value!r}")
        if not lo <= value <= hi:
            raise ConfigError(f"{section}.{key} = {value} outside [{lo}, {hi}]")
    else:
        if not value > lo or (hi is not None and not value < hi):
            raise ConfigError(f"{section}.{key} = {value} outside ({lo}, {'inf' if hi is None else hi})")


@dataclass
class ExperimentConfig:
    map: dict
    stages: list = field(default_factory=lambda: list(STAGES))
    seed: int = 0
    output_dir: str = "out"
    sections: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    def __post_init__(self):
        self.validate()

    def __getitem__(self, name):
        return self.sections[name]

    def validate(self):
        if not isinstance(self.map, dict) or self.map.get("family") not in MAP_FAMILIES:
            raise ConfigError(f"map.family must be one of {list(MAP_FAMILIES)}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an integer in [0, 2^64), got {self.seed!r}")
        if not isinstance(self.output_dir, str) or not self.output_dir:
            raise ConfigError("output_dir must be a non-empty string")
        self.stages = check_stages(self.stages)
        for name, sec in self.sections.items():
            if name not in DEFAULTS:
                raise ConfigError(f"unknown section {name!r}")
            for key, value in sec.items():
                if key not in DEFAULTS[name]:
                    raise ConfigError(f"unknown key {name}.{key}")
                _check_value(name, key, value)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        doc = copy.deepcopy(doc)
        top = {"map", "stages", "seed", "output_dir"}
        unknown = set(doc) - top - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "map" not in doc:
            raise ConfigError("config needs a 'map' section")
        sections = copy.deepcopy(DEFAULTS)
        for name in DEFAULTS:
            given = doc.get(name, {})
            if not isinstance(given, dict):
                raise ConfigError(f"section {name!r} must be an object")
            for key in given:
                if key not in DEFAULTS[name]:
                    raise ConfigError(f"unknown key {name}.{key}")
            sections[name].update(given)
        return cls(
            map=doc["map"],
            stages=doc.get("stages", list(STAGES)),
            seed=doc.get("seed", 0),
            output_dir=doc.get("output_dir", "out"),
            sections=sections,
        )

    def to_dict(self) -> dict:
        out = {"map": copy.deepcopy(self.map), "stages": list(self.stages), "seed": self.seed, "output_dir": self.output_dir}
        out.update(copy.deepcopy(self.sections))
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from None
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.loads(Path(path).read_text())


def shipped_config_path(name: str) -> Path:
    return Path(__file__).parent / "configs" / name


def load_shipped(name: str = "doubling-pipeline.json") -> ExperimentConfig:
    return ExperimentConfig.load(shipped_config_path(name))
