"""Experiment configuration read from YAML.

Schema (version 1); every key is optional::

    version: 1
    scenario: {n_lms: 1, n_cubesat: 3, ...}     # ScenarioConfig fields
    env: {arrival_fraction: 0.5, gamma2: 1.0}   # EnvConfig fields except alpha
    alpha1: 0.5
    alpha2: 0.5
    schedulers: [comappo, ccppo, woa, random]
    profile: test                               # or paper
    episodes: 2000                              # training episodes per learned scheduler
    train_pool: 32                              # distinct training scenarios
    eval_scenarios: 8
    eval_episodes: 2                            # evaluation episodes per scenario
    seeds: [0, 1, 2]
    sweep_axis: none                            # subtasks | memory | compute | alpha
    sweep_values: []
    subtask_divisor: 10                         # desk-scale divisor for the subtasks axis
    woa_budget: 20
    woa_population: 30
    ablation_no_convex: false
    hyper: {lr_actor: 0.003}                    # PpoHyper overrides
    out: out
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ..env import EnvConfig
from ..model import ScenarioConfig

CONFIG_VERSION = 1
SCHEDULERS = ("comappo", "ccppo", "woa", "random")
SWEEP_AXES = ("none", "subtasks", "memory", "compute", "alpha")


class ConfigError(ValueError):
    pass


def toy_scenario(**kw) -> ScenarioConfig:
    """Desk-scale scenario: 1 LMS, 3 CubeSats, 20 CTEs, 4 tasks of 5 sub-tasks, 100 slots."""
    base = dict(n_lms=1, n_cubesat=3, n_cte=20, n_tasks=4, horizon_slots=100)
    base.update(kw)
    return ScenarioConfig(**base)


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=toy_scenario)
    env: dict = field(default_factory=dict)
    alpha1: float = 0.5
    alpha2: float = 0.5
    schedulers: tuple[str, ...] = SCHEDULERS
    profile: str = "test"
    episodes: int = 2000
    train_pool: int = 32
    eval_scenarios: int = 8
    eval_episodes: int = 2
    seeds: tuple[int, ...] = (0,)
    sweep_axis: str = "none"
    sweep_values: tuple = ()
    subtask_divisor: int = 10
    woa_budget: int = 20
    woa_population: int = 30
    ablation_no_convex: bool = False
    hyper: dict = field(default_factory=dict)
    out: str = "out"
    version: int = CONFIG_VERSION

    def __post_init__(self) -> None:
        self.schedulers = tuple(self.schedulers)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.sweep_values = tuple(self.sweep_values)
        self.validate()

    def validate(self) -> None:
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {self.version}")
        if not (0 < self.alpha1 < 1 and 0 < self.alpha2 < 1):
            raise ConfigError("alpha1 and alpha2 must lie in (0, 1)")
        if abs(self.alpha1 + self.alpha2 - 1.0) > 1e-9:
            raise ConfigError(f"alpha1 + alpha2 must equal 1, got {self.alpha1 + self.alpha2}")
        bad = [s for s in self.schedulers if s not in SCHEDULERS]
        if bad:
            raise ConfigError(f"unknown scheduler(s) {bad}; choose from {list(SCHEDULERS)}")
        if self.profile not in ("test", "paper"):
            raise ConfigError("profile must be 'test' or 'paper'")
        if self.sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"sweep_axis must be one of {list(SWEEP_AXES)}")
        if self.sweep_axis != "none" and not self.sweep_values:
            raise ConfigError(f"sweep_axis {self.sweep_axis!r} needs sweep_values")
        if self.sweep_axis == "alpha" and not all(0 < float(v) < 1 for v in self.sweep_values):
            raise ConfigError("alpha sweep values must lie in (0, 1)")
        if min(self.episodes, self.train_pool - 1, self.eval_scenarios - 1, self.eval_episodes - 1) < 0:
            raise ConfigError("episodes must be >= 0 and pool/scenario/episode counts >= 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.woa_budget < 1 or self.woa_population < 2:
            raise ConfigError("woa_budget must be >= 1 and woa_population >= 2")
        if self.subtask_divisor < 1:
            raise ConfigError("subtask_divisor must be >= 1")
        env_fields = {f.name for f in dataclasses.fields(EnvConfig)} - {"alpha1", "alpha2"}
        unknown = set(self.env) - env_fields
        if unknown:
            raise ConfigError(f"unknown env key(s) {sorted(unknown)}")
        self.scenario.validate()

    def env_config(self) -> EnvConfig:
        return EnvConfig(alpha1=self.alpha1, alpha2=self.alpha2, **self.env)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["scenario"] = self.scenario.to_dict()
        d["schedulers"] = list(self.schedulers)
        d["seeds"] = list(self.seeds)
        d["sweep_values"] = list(self.sweep_values)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config key(s) {sorted(unknown)}")
        if "scenario" in d:
            sc = d["scenario"] or {}
            if not isinstance(sc, dict):
                raise ConfigError("scenario must be a mapping")
            try:
                base = toy_scenario().to_dict()
                base.update(sc)
                d["scenario"] = ScenarioConfig.from_dict(base)
            except (TypeError, ValueError, KeyError) as exc:
                raise ConfigError(f"bad scenario section: {exc}") from exc
        for key in ("env", "hyper"):
            if key in d and d[key] is None:
                d[key] = {}
            if key in d and not isinstance(d[key], dict):
                raise ConfigError(f"{key} must be a mapping")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def canonical_json(self) -> str:
        """Sorted JSON of everything that affects results (the output directory does not)."""
        d = self.to_dict()
        d.pop("out")
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {p}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"malformed config {p}: top level must be a mapping")
    return ExperimentConfig.from_dict(data)


def dump_config(cfg: ExperimentConfig) -> str:
    """YAML of the resolved config; ``out`` is left out so the file does not depend on where it is written."""
    d = cfg.to_dict()
    d.pop("out")
    return yaml.safe_dump(d, sort_keys=True)
