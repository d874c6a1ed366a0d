"""Experiment orchestration: train, evaluate greedily, sweep."""
from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..env import EnvConfig, LearnedAllocationHook, OffloadEnv
from ..mappo import PpoHyper, ScenarioStream, TrainResult, make_learner, write_curves_csv
from ..baselines import RandomXPolicy, WoaPolicy
from ..model import Scenario, ScenarioConfig, generate_scenario
from .config import ExperimentConfig
from .metrics import LAYERS, MetricsReport, pooled_metrics

log = logging.getLogger(__name__)

WORKERS_ENV = "SATOFFLOAD_WORKERS"

# stream tags keep training, evaluation and learner seeds disjoint
_TAG_TRAIN, _TAG_EVAL, _TAG_LEARNER, _TAG_RESET, _TAG_BASELINE = range(5)


def derive_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([int(seed), *tags]).generate_state(1, np.uint64)[0] >> 1)


@dataclass
class SlotChoice:
    actions: dict | np.ndarray
    requests: np.ndarray | None = None
    hook: Callable | None = None


class LearnedScheduler:
    """Wraps a trained learner; acts greedily unless told otherwise."""

    def __init__(self, learner, greedy: bool = True):
        self.learner = learner
        self.greedy = greedy
        self.hook = LearnedAllocationHook(learner.hyper.allocation_levels) if learner.hyper.learned_allocation else None

    def __call__(self, env: OffloadEnv) -> SlotChoice:
        obs, mask, active = env.observe_all()
        a, _, _ = self.learner.act(obs, mask, active, self.greedy)
        server_a, req = self.learner.env_actions(a)
        return SlotChoice(server_a, req, self.hook)


def run_episode(env: OffloadEnv, scheduler, seed: int) -> list:
    """Play one episode with ``scheduler(env)`` choosing each slot; returns sub-task outcomes."""
    env.reset(seed)
    while not env.done:
        choice = scheduler(env)
        if not isinstance(choice, SlotChoice):
            choice = SlotChoice(choice)
        env.step(choice.actions, choice.hook, choice.requests)
    return env.final_outcomes()


def hyper_for(cfg: ExperimentConfig, learned_allocation: bool = False) -> PpoHyper:
    kw = dict(cfg.hyper)
    kw["learned_allocation"] = learned_allocation or cfg.ablation_no_convex
    if "allocation_levels" in kw:
        kw["allocation_levels"] = tuple(kw["allocation_levels"])
    return PpoHyper.test(**kw) if cfg.profile == "test" else PpoHyper.paper(**kw)


def training_stream(cfg: ExperimentConfig, seed: int) -> ScenarioStream:
    return ScenarioStream(cfg.scenario, cfg.env_config(), derive_seed(seed, _TAG_TRAIN), cfg.train_pool)


def evaluation_scenarios(cfg: ExperimentConfig, seed: int) -> list[Scenario]:
    base = derive_seed(seed, _TAG_EVAL)
    return [generate_scenario(cfg.scenario, derive_seed(base, i)) for i in range(cfg.eval_scenarios)]


def train_learner(cfg: ExperimentConfig, kind: str, seed: int, curve_path=None, stream=None):
    stream = stream or training_stream(cfg, seed)
    learner = make_learner(kind, stream.envs[0], hyper_for(cfg), derive_seed(seed, _TAG_LEARNER))
    result = learner.train(stream, cfg.episodes, curve_path)
    return learner, result


def build_scheduler(cfg: ExperimentConfig, name: str, seed: int, curve_path=None):
    """(scheduler, TrainResult or None)."""
    if name in ("comappo", "ccppo"):
        learner, result = train_learner(cfg, name, seed, curve_path)
        return LearnedScheduler(learner), result
    if name == "woa":
        return WoaPolicy(cfg.woa_budget, cfg.woa_population, derive_seed(seed, _TAG_BASELINE)), None
    if name == "random":
        return RandomXPolicy(derive_seed(seed, _TAG_BASELINE)), None
    raise ValueError(f"unknown scheduler {name!r}")


def evaluate_scheduler(cfg: ExperimentConfig, scheduler, seed: int, scenarios: Sequence[Scenario] | None = None):
    """(MetricsReport, list of per-episode outcome lists) over the held-out scenarios."""
    scenarios = scenarios if scenarios is not None else evaluation_scenarios(cfg, seed)
    env_cfg = cfg.env_config()
    reset_base = derive_seed(seed, _TAG_RESET)
    episodes = []
    for i, sc in enumerate(scenarios):
        env = OffloadEnv(sc, env_cfg)
        for e in range(cfg.eval_episodes):
            episodes.append(run_episode(env, scheduler, derive_seed(reset_base, i, e)))
    return pooled_metrics(episodes, env_cfg.weights), episodes


def evaluate(cfg: ExperimentConfig, name: str, seed: int, curve_path=None) -> tuple[MetricsReport, TrainResult | None, list]:
    sched, result = build_scheduler(cfg, name, seed, curve_path)
    report, episodes = evaluate_scheduler(cfg, sched, seed)
    return report, result, episodes


# ---------------------------------------------------------------------------
# sweeps


def _range(v) -> tuple[float, float]:
    if isinstance(v, str):
        lo, hi = v.split("-")
        return float(lo), float(hi)
    lo, hi = v
    return float(lo), float(hi)


def point_config(cfg: ExperimentConfig, value) -> ExperimentConfig:
    """Configuration of one sweep point."""
    axis = cfg.sweep_axis
    sc = cfg.scenario.to_dict()
    if axis == "none":
        return cfg
    if axis == "alpha":
        a1 = float(value)
        return cfg.replace(alpha1=a1, alpha2=1.0 - a1)
    if axis == "subtasks":
        total = float(value) / cfg.subtask_divisor
        sc["n_tasks"] = max(1, int(round(total / cfg.scenario.subtasks_per_task)))
    elif axis == "memory":
        sc["memory_range_mb"] = list(_range(value))
    elif axis == "compute":
        sc["compute_range_gcycles"] = list(_range(value))
    return cfg.replace(scenario=ScenarioConfig.from_dict(sc))


SWEEP_COLUMNS = (
    "axis", "axis_value", "scheduler", "seed", "status", "mst", "msp", "objective", "success_rate",
    *(f"share_{k}" for k in LAYERS), "n_tasks", "n_subtasks", "error",
)


def _point_job(args) -> dict:
    cfg, value, name, seed = args
    row = {"axis": cfg.sweep_axis, "axis_value": "" if value is None else str(value), "scheduler": name, "seed": seed}
    try:
        report, _, _ = evaluate(point_config(cfg, value) if value is not None else cfg, name, seed)
        row.update(status="ok" if not report.empty else "empty", error="", **report.row())
    except Exception as exc:  # one bad point must not stop the sweep
        log.exception("sweep point %s/%s/%s failed", value, name, seed)
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    return row


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def run_sweep(cfg: ExperimentConfig, csv_path: str | Path | None = None, workers: int | None = None) -> list[dict]:
    """Every (point, scheduler, seed) evaluated; rows sorted by key."""
    values = list(cfg.sweep_values) if cfg.sweep_axis != "none" else [None]
    jobs = [(cfg, v, name, seed) for v in values for name in cfg.schedulers for seed in cfg.seeds]
    n = workers or worker_count()
    if n > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n) as ex:
            rows = list(ex.map(_point_job, jobs))
    else:
        rows = [_point_job(j) for j in jobs]
    order = {v: i for i, v in enumerate("" if v is None else str(v) for v in values)}
    rows.sort(key=lambda r: (order[r["axis_value"]], cfg.schedulers.index(r["scheduler"]), r["seed"]))
    if csv_path is not None:
        write_rows(rows, csv_path)
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(rows: Sequence[dict], path: str | Path, columns: Sequence[str] = SWEEP_COLUMNS) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


@dataclass
class AlphaCurve:
    alphas: tuple[float, ...]
    mst: dict[int, list[float]] = field(default_factory=dict)  # seed -> values over alphas
    msp: dict[int, list[float]] = field(default_factory=dict)
    objective: dict[int, list[float]] = field(default_factory=dict)

    def monotone_seeds(self) -> int:
        """Seeds whose MST strictly falls and MSP strictly rises as alpha1 grows."""
        ok = 0
        for s in self.mst:
            t, p = np.array(self.mst[s]), np.array(self.msp[s])
            if np.all(np.diff(t) < 0) and np.all(np.diff(p) > 0):
                ok += 1
        return ok


def alpha_tradeoff(cfg: ExperimentConfig, alphas: Sequence[float] = (0.3, 0.5, 0.7), scheduler: str = "comappo",
                   csv_path=None) -> AlphaCurve:
    for a in alphas:
        if not 0 < a < 1:
            raise ValueError("alpha values must lie in (0, 1)")
    sweep = cfg.replace(sweep_axis="alpha", sweep_values=tuple(alphas), schedulers=(scheduler,))
    rows = run_sweep(sweep, csv_path)
    curve = AlphaCurve(tuple(alphas))
    for r in rows:
        if r["status"] != "ok":
            continue
        s = r["seed"]
        curve.mst.setdefault(s, []).append(r["mst"])
        curve.msp.setdefault(s, []).append(r["msp"])
        curve.objective.setdefault(s, []).append(r["objective"])
    # drop seeds with a failed point so every curve spans the grid
    for d in (curve.mst, curve.msp, curve.objective):
        for s in [s for s, v in d.items() if len(v) != len(alphas)]:
            del d[s]
    return curve


__all__ = [
    "LearnedScheduler", "SlotChoice", "alpha_tradeoff", "build_scheduler", "derive_seed", "evaluate",
    "evaluate_scheduler", "evaluation_scenarios", "hyper_for", "point_config", "run_episode", "run_sweep",
    "train_learner", "training_stream", "write_curves_csv", "write_rows",
]
