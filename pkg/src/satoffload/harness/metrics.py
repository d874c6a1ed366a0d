"""MST / MSP / weighted objective from per-sub-task outcomes."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..allocator import Weights

LAYERS = ("CNS", "LMS", "CubeSat")


@dataclass(frozen=True)
class MetricsReport:
    """Metrics of one evaluation.

    ``mst`` and ``msp`` average sub-task service time and price first within
    each task, then over tasks. A failed sub-task is charged its CNS fallback
    outcome and counts toward the CNS share. ``empty`` marks a report built
    from zero tasks; its numeric fields are None.
    """

    mst: float | None
    msp: float | None
    objective: float | None
    success_rate: float | None
    proportions: dict[str, float]
    n_tasks: int
    n_subtasks: int
    weights: tuple[float, float] = (0.5, 0.5)
    empty: bool = False

    def __post_init__(self) -> None:
        if self.empty:
            return
        a1, a2 = self.weights
        if abs(self.objective - (a1 * self.mst + a2 * self.msp)) > 1e-12 * max(1.0, abs(self.objective)):
            raise AssertionError("objective != alpha1*mst + alpha2*msp")
        if abs(sum(self.proportions.values()) - 1.0) > 1e-12:
            raise AssertionError("offloading proportions do not sum to 1")

    @classmethod
    def empty_report(cls, weights: Weights | None = None) -> "MetricsReport":
        w = weights or Weights()
        return cls(None, None, None, None, {k: 0.0 for k in LAYERS}, 0, 0, (w.alpha1, w.alpha2), empty=True)

    def row(self) -> dict:
        out = {
            "mst": self.mst, "msp": self.msp, "objective": self.objective, "success_rate": self.success_rate,
            "n_tasks": self.n_tasks, "n_subtasks": self.n_subtasks,
        }
        for k in LAYERS:
            out[f"share_{k}"] = self.proportions.get(k, 0.0)
        return out


def compute_metrics(outcomes: Iterable, weights: Weights | None = None) -> MetricsReport:
    """``outcomes`` carry ``parent_task``, ``t_ser``, ``p_ser``, ``success`` and ``layer``."""
    w = weights or Weights()
    outcomes = list(outcomes)
    if not outcomes:
        return MetricsReport.empty_report(w)
    by_task: dict[int, list] = defaultdict(list)
    for o in outcomes:
        by_task[o.parent_task].append(o)
    tasks = sorted(by_task)
    t_mean = np.array([np.mean([o.t_ser for o in by_task[d]]) for d in tasks])
    p_mean = np.array([np.mean([o.p_ser for o in by_task[d]]) for d in tasks])
    mst = float(t_mean.mean())
    msp = float(p_mean.mean())
    counts = {k: 0 for k in LAYERS}
    for o in outcomes:
        counts[o.layer] += 1
    n = len(outcomes)
    props = {k: counts[k] / n for k in LAYERS}
    # make the shares sum to exactly 1
    props["CNS"] = 1.0 - props["LMS"] - props["CubeSat"]
    success = sum(1 for o in outcomes if o.success) / n
    return MetricsReport(mst, msp, w.alpha1 * mst + w.alpha2 * msp, success, props, len(tasks), n, (w.alpha1, w.alpha2))


@dataclass
class Aggregate:
    """Per-seed values of one metric with mean and standard deviation."""

    values: list[float] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values)) if self.values else float("nan")

    @property
    def std(self) -> float:
        return float(np.std(self.values)) if self.values else float("nan")


def aggregate(reports: Sequence[MetricsReport], key: str = "objective") -> Aggregate:
    return Aggregate([getattr(r, key) for r in reports if not r.empty])


def pooled_metrics(outcome_lists: Sequence[Sequence], weights: Weights | None = None) -> MetricsReport:
    """Metrics over several episodes, with task ids made distinct per episode."""

    @dataclass(frozen=True)
    class _Tagged:
        parent_task: tuple
        t_ser: float
        p_ser: float
        success: bool
        layer: str

    flat = [
        _Tagged((i, o.parent_task), o.t_ser, o.p_ser, o.success, o.layer)
        for i, outs in enumerate(outcome_lists)
        for o in outs
    ]
    return compute_metrics(flat, weights)


@dataclass(frozen=True)
class DemandBin:
    low: float
    high: float
    count: int
    proportions: dict[str, float]


def proportions_by_bin(
    outcomes: Iterable, key: str = "memory_mb", n_bins: int = 3, edges: Sequence[float] | None = None
) -> list[DemandBin]:
    """Per-layer shares of sub-tasks grouped by ``key`` (``memory_mb`` or ``compute_gigacycles``).

    Bins hold equal counts unless ``edges`` are given; values outside the
    edges join the first or last bin. Empty bins are dropped.
    """
    outcomes = list(outcomes)
    if edges is None and n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if not outcomes:
        return []
    vals = np.array([getattr(o, key) for o in outcomes], dtype=float)
    if edges is None:
        edges = np.quantile(vals, np.linspace(0.0, 1.0, n_bins + 1))
    else:
        edges = np.asarray(edges, dtype=float)
        if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("edges must be increasing with at least two entries")
        n_bins = len(edges) - 1
    idx = np.clip(np.searchsorted(edges[1:-1], vals, side="right"), 0, n_bins - 1)
    out = []
    for b in range(n_bins):
        members = [o for o, i in zip(outcomes, idx) if i == b]
        if not members:
            continue
        n = len(members)
        props = {k: sum(o.layer == k for o in members) / n for k in LAYERS}
        out.append(DemandBin(float(edges[b]), float(edges[b + 1]), n, props))
    return out
