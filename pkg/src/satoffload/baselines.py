"""Comparison schedulers: Random-X and the whale optimization algorithm (WOA).

Both come in two shapes:

* whole-matrix functions (``random_x``, ``woa_schedule``) producing one
  :class:`OffloadMatrix` for a set of sub-tasks at one slot;
* per-slot policies (``RandomXPolicy``, ``WoaPolicy``) that pick a menu index
  for every active agent of an :class:`OffloadEnv`, the same interface the
  learned schedulers use during evaluation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .allocator import OffloadMatrix, Weights, allocate_all
from .env import MENU_SIZE, CoverageIndex, EnvConfig, OffloadEnv
from .model import SatelliteLayer, Scenario


def _cubesat_set(scenario: Scenario) -> set[int]:
    return {s.id for s in scenario.satellites if s.layer is SatelliteLayer.CUBESAT}


def covering_servers(scenario: Scenario, cte: int, coverage: CoverageIndex, slot: int | None = None) -> list[int]:
    """Servers able to host a sub-task of ``cte`` (at ``slot``, or anywhere in the horizon)."""
    out = []
    for s in scenario.satellites:
        if s.layer is SatelliteLayer.CNS:
            out.append(s.id)
        elif slot is None:
            if (coverage.end[s.id, cte] >= 0).any():
                out.append(s.id)
        elif coverage.covers(s.id, cte, slot):
            out.append(s.id)
    return out


# ---------------------------------------------------------------------------
# Random-X


def random_x(
    scenario: Scenario,
    seed: int,
    subtask_ids: Sequence[int] | None = None,
    slot: int | None = None,
    coverage: CoverageIndex | None = None,
) -> OffloadMatrix:
    """Uniform covering server per sub-task; a CubeSat already taken is redrawn."""
    rng = np.random.default_rng(seed)
    cov = coverage or CoverageIndex(scenario)
    cubes = _cubesat_set(scenario)
    subs = scenario.subtasks
    ids = list(range(len(subs))) if subtask_ids is None else [int(i) for i in subtask_ids]
    taken: set[int] = set()
    servers = []
    for sid in ids:
        menu = covering_servers(scenario, subs[sid].owner, cov, slot)
        while True:
            pick = menu[int(rng.integers(len(menu)))]
            if pick not in taken:
                break
        if pick in cubes:
            taken.add(pick)
        servers.append(pick)
    return OffloadMatrix(tuple(ids), tuple(servers))


@dataclass
class RandomXPolicy:
    """Per-slot Random-X: uniform over each agent's valid menu entries.

    Joint draws placing two agents on one CubeSat are rejected and redrawn.
    """

    seed: int = 0
    max_rejections: int = 1000
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.rng = np.random.default_rng(self.seed)

    def __call__(self, env: OffloadEnv) -> dict[int, int]:
        decisions = env.decisions
        valid = [np.flatnonzero(d.mask) for d in decisions]
        for _ in range(self.max_rejections):
            choice = {d.agent_index: int(v[self.rng.integers(len(v))]) for d, v in zip(decisions, valid)}
            used = [d.menu[choice[d.agent_index]] for d in decisions]
            cubes = [s for s in used if env.layers[s] == 2]
            if len(cubes) == len(set(cubes)):
                return choice
        # pathological menus: fall back to the CNS for everyone
        return {d.agent_index: MENU_SIZE - 1 for d in decisions}


# ---------------------------------------------------------------------------
# WOA


def decode(position: np.ndarray, menus: Sequence[Sequence[int]], masks: np.ndarray, cubesats: set[int]) -> tuple[int, ...]:
    """Masked argmax per row, skipping CubeSats already taken by earlier rows.

    Ties go to the lowest server id. Returns menu indices.
    """
    taken: set[int] = set()
    out = []
    for i, menu in enumerate(menus):
        best, best_val, best_srv = -1, -math.inf, math.inf
        for k, srv in enumerate(menu):
            if not masks[i, k] or srv in taken:
                continue
            v = position[i, k]
            if v > best_val or (v == best_val and srv < best_srv):
                best, best_val, best_srv = k, v, srv
        if best < 0:
            raise ValueError(f"row {i} has no selectable server")
        if menu[best] in cubesats:
            taken.add(menu[best])
        out.append(best)
    return tuple(out)


@dataclass
class WoaState:
    population: np.ndarray  # (P, n, menu)
    iteration: int
    best_position: np.ndarray
    best_choice: tuple[int, ...]
    best_objective: float
    a: float = 2.0
    spiral_b: float = 1.0
    history: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.population) < 2:
            raise ValueError("WOA needs a population of at least 2")


def woa_optimize(
    fitness: Callable[[tuple[int, ...]], float],
    menus: Sequence[Sequence[int]],
    masks: np.ndarray,
    cubesats: set[int],
    budget: int,
    seed: int,
    population: int = 30,
    spiral_b: float = 1.0,
) -> WoaState:
    """Minimise ``fitness`` over decoded choices.

    Iteration 1 evaluates the random initial population; each further
    iteration applies the encircling, spiral or search move to every whale
    with ``a`` decaying linearly from 2 to 0.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    masks = np.asarray(masks, dtype=bool)
    shape = (len(menus), masks.shape[1] if masks.ndim == 2 else MENU_SIZE)
    cache: dict[tuple[int, ...], float] = {}

    def score(pos):
        ch = decode(pos, menus, masks, cubesats)
        if ch not in cache:
            cache[ch] = float(fitness(ch))
        return ch, cache[ch]

    pop = rng.random((population,) + shape)
    scored = [score(p) for p in pop]
    k = min(range(population), key=lambda i: scored[i][1])
    st = WoaState(pop, 1, pop[k].copy(), scored[k][0], scored[k][1], 2.0, spiral_b, [scored[k][1]])
    for it in range(1, budget):
        a = 2.0 - 2.0 * it / max(budget - 1, 1)
        st.a = a
        for i in range(population):
            x = pop[i]
            r1, r2, p = rng.random(3)
            A = 2 * a * r1 - a
            C = 2 * r2
            if p < 0.5:
                ref = st.best_position if abs(A) < 1 else pop[rng.integers(population)]
                new = ref - A * np.abs(C * ref - x)
            else:
                l = rng.uniform(-1.0, 1.0)
                new = np.abs(st.best_position - x) * math.exp(spiral_b * l) * math.cos(2 * math.pi * l) + st.best_position
            pop[i] = np.clip(new, 0.0, 1.0)
            ch, f = score(pop[i])
            if f < st.best_objective:
                st.best_objective, st.best_choice, st.best_position = f, ch, pop[i].copy()
        st.iteration = it + 1
        st.history.append(st.best_objective)
    return st


def slot_menus(scenario: Scenario, subtask_ids: Sequence[int], slot: int, env: OffloadEnv | None = None):
    """Menus and masks of ``subtask_ids`` at ``slot`` with every CubeSat idle."""
    env = env or OffloadEnv(scenario)
    menus, masks = [], []
    for sid in subtask_ids:
        m, k = env.menu_for(scenario.subtasks[sid].owner, slot)
        menus.append(m)
        masks.append(k)
    return menus, np.array(masks)


def woa_schedule(
    scenario: Scenario,
    budget: int,
    seed: int,
    subtask_ids: Sequence[int] | None = None,
    slot: int = 0,
    weights: Weights | None = None,
    population: int = 30,
) -> OffloadMatrix:
    """WOA over the slot menus; fitness is the allocator objective of the decoded matrix."""
    w = weights or Weights()
    ids = list(range(len(scenario.subtasks))) if subtask_ids is None else [int(i) for i in subtask_ids]
    menus, masks = slot_menus(scenario, ids, slot)

    def fitness(choice):
        m = OffloadMatrix(tuple(ids), tuple(menus[i][c] for i, c in enumerate(choice)))
        return allocate_all(scenario, m, w, check=False).objective

    st = woa_optimize(fitness, menus, masks, _cubesat_set(scenario), budget, seed, population)
    return OffloadMatrix(tuple(ids), tuple(menus[i][c] for i, c in enumerate(st.best_choice)))


@dataclass
class WoaPolicy:
    """Per-slot WOA over the active agents' menus.

    Fitness is the allocator objective; like the whole-matrix variant it does
    not look at deadlines.
    """

    budget: int = 20
    population: int = 30
    seed: int = 0
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.rng = np.random.default_rng(self.seed)

    def __call__(self, env: OffloadEnv) -> dict[int, int]:
        decisions = env.decisions
        menus = [d.menu for d in decisions]
        masks = np.array([d.mask for d in decisions])
        ids = tuple(d.subtask for d in decisions)
        cubes = set(int(c) for c in env.cube_ids)
        w = env.config.weights
        th = env.config.thresholds

        def fitness(choice):
            m = OffloadMatrix(ids, tuple(menus[i][c] for i, c in enumerate(choice)))
            return allocate_all(env.scenario, m, w, thresholds=th, check=False).objective

        st = woa_optimize(fitness, menus, masks, cubes, self.budget, int(self.rng.integers(2**63)), self.population)
        return {d.agent_index: int(c) for d, c in zip(decisions, st.best_choice)}
