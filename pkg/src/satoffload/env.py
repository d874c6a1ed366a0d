"""Slot-by-slot offloading episodes.

Every LMS and CubeSat is an agent. In slot ``n`` an agent is active when it
covers the owner of a pending sub-task; it takes the first such sub-task in
queue order that no earlier agent (by satellite id) has claimed in that slot.
The agent picks one server from a fixed menu built for the sub-task's owner:

    [CubeSat 1, CubeSat 2, CubeSat 3, LMS, CNS]

ranked idle-first and then by remaining window. Entries that do not cover the
owner, or CubeSats still busy with earlier work, are masked. All decisions of
a slot are then resolved together: CubeSat double-booking is rejected, the
allocator hook assigns bandwidth/compute shares per server, and each sub-task
succeeds if its service time fits in the remaining coverage window.

A failed sub-task earns ``-gamma2`` and is charged the cost of running alone
on the CNS (the network's fallback); sub-tasks still pending when the horizon
ends are failed the same way.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .allocator import (
    AllocationResult,
    OffloadMatrix,
    Thresholds,
    Weights,
    allocate_all,
    averaging_weights,
)
from .channel import BITS_PER_MB, HZ_PER_MHZ, db_to_linear
from .model import SatelliteLayer, Scenario, coverage_windows

MENU_SIZE = 5
MENU_CUBESATS = 3
LMS_SLOT = 3
CNS_SLOT = 4
OWN_FEATURES = 6
ENTRY_FEATURES = 6
OBS_DIM = OWN_FEATURES + MENU_SIZE * ENTRY_FEATURES

CLASS_CUBESAT = 0
CLASS_LMS = 1
CLASS_NAMES = ("CubeSat", "LMS")


@dataclass(frozen=True)
class EnvConfig:
    alpha1: float = 0.5
    alpha2: float = 0.5
    gamma1: float = 1.0  # success reward scale
    gamma2: float = 1.0  # failure penalty
    eta_mode: str = "remaining_capacity"  # or "spectral_efficiency"
    y_max: float = 1.0
    beta_max: float | None = None
    # tasks arrive at slots drawn uniformly from [0, arrival_fraction * horizon)
    arrival_fraction: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.arrival_fraction <= 1.0:
            raise ValueError("arrival_fraction must lie in [0, 1]")
        if self.gamma1 <= 0 or self.gamma2 <= 0:
            raise ValueError("gamma1 and gamma2 must be positive")
        if self.eta_mode not in ("remaining_capacity", "spectral_efficiency"):
            raise ValueError(f"unknown eta_mode {self.eta_mode!r}")
        if self.alpha1 <= 0 or self.alpha2 <= 0:
            raise ValueError("alpha1 and alpha2 must be positive")

    @property
    def weights(self) -> Weights:
        return Weights(self.alpha1, self.alpha2)

    @property
    def thresholds(self) -> Thresholds:
        return Thresholds(self.y_max, self.beta_max)


class CoverageIndex:
    """``end[s, c, n]``: exclusive end slot of the window of satellite ``s`` over CTE ``c``
    containing slot ``n``, or -1 when uncovered."""

    def __init__(self, scenario: Scenario, horizon_slots: int | None = None):
        h = scenario.horizon_slots if horizon_slots is None else horizon_slots
        self.horizon = h
        self.end = np.full((len(scenario.satellites), len(scenario.ctes), h), -1, dtype=np.int32)
        for w in coverage_windows(scenario, h):
            self.end[w.satellite, w.cte, w.start_slot : w.end_slot] = w.end_slot

    def covers(self, sat: int, cte: int, slot: int) -> bool:
        return 0 <= slot < self.horizon and self.end[sat, cte, slot] > slot

    def remaining_slots(self, sat: int, cte: int, slot: int) -> int:
        e = int(self.end[sat, cte, slot])
        return max(e - slot, 0)


@dataclass(frozen=True)
class Observation:
    agent: int  # satellite id
    vector: np.ndarray


@dataclass(frozen=True)
class AgentAction:
    one_hot: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.one_hot)
        if a.shape != (MENU_SIZE,) or not np.isin(a, (0, 1)).all() or a.sum() != 1:
            raise ValueError("action must be a one-hot vector over the 5-entry menu")

    @property
    def index(self) -> int:
        return int(np.argmax(self.one_hot))

    @classmethod
    def of(cls, index: int) -> "AgentAction":
        v = np.zeros(MENU_SIZE, dtype=np.int8)
        v[index] = 1
        return cls(v)


@dataclass(frozen=True)
class RewardRecord:
    agent: int
    subtask: int
    server: int  # requested server id (-1 for an empty menu entry)
    value: float
    success: bool
    t_ser: float
    p_ser: float


@dataclass(frozen=True)
class SubtaskOutcome:
    """Final accounting of one sub-task, as consumed by the metrics."""

    subtask: int
    parent_task: int
    memory_mb: float
    compute_gigacycles: float
    server: int  # executing server (the CNS for fallbacks)
    layer: str
    t_ser: float
    p_ser: float
    success: bool
    slot: int


@dataclass(frozen=True)
class Decision:
    agent_index: int
    agent: int  # satellite id
    subtask: int
    menu: tuple[int, ...]  # server id per menu entry, -1 when empty
    mask: np.ndarray


@dataclass
class GlobalState:
    """Snapshot of the episode. ``features`` is built on first access.

    Feature row per pending sub-task: [M, nu, M_tot, M_load, zeta_c, eta_c, zeta_l, eta_l]
    where M_tot is the pending memory, M_load the memory already offloaded and
    the zeta/eta pairs average bandwidth and remaining capacity over the
    CubeSats / LMSs covering the owner. Rows of other sub-tasks are zero.
    """

    slot: int
    pending: tuple[int, ...]
    loads_mb: np.ndarray  # memory successfully offloaded per server
    busy_until: np.ndarray  # first free slot per server
    env: "OffloadEnv" = field(repr=False, compare=False)
    _features: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def total_pending_mb(self) -> float:
        return float(self.env.mem[list(self.pending)].sum()) if self.pending else 0.0

    @property
    def features(self) -> np.ndarray:
        if self._features is None:
            self._features = self.env._state_features(self)
        return self._features


@dataclass
class StepResult:
    state: GlobalState
    rewards: list[RewardRecord]
    done: bool
    allocation: AllocationResult | None = None


AllocatorHook = Callable[["OffloadEnv", OffloadMatrix, Sequence[int] | None], AllocationResult]


def closed_form_hook(env: "OffloadEnv", matrix: OffloadMatrix, requests=None) -> AllocationResult:
    return allocate_all(env.scenario, matrix, env.config.weights, thresholds=env.config.thresholds, check=False)


@dataclass
class LearnedAllocationHook:
    """Allocation requested by the policy instead of the closed forms.

    ``requests[i]`` indexes ``levels``: bandwidth and compute shares request
    ``levels[k]`` (times the processor count for compute), CNS power requests
    ``levels[k] * cns_scale``. Requests exceeding a server's capacity are
    scaled down proportionally.
    """

    levels: tuple[float, ...] = (0.125, 0.25, 0.5, 1.0)
    cns_scale: float = 4.0

    def __call__(self, env: "OffloadEnv", matrix: OffloadMatrix, requests=None) -> AllocationResult:
        if requests is None:
            requests = [len(self.levels) - 1] * len(matrix)
        sc = env.scenario
        sats = sc.satellites
        n = len(matrix)
        lv = np.array([self.levels[int(r)] for r in requests], dtype=float)
        y = lv.copy()
        beta = np.full(n, np.nan)
        omega = np.full(n, np.nan)
        servers = np.array(matrix.servers)
        for sid in sorted(set(matrix.servers)):
            idx = np.flatnonzero(servers == sid)
            if y[idx].sum() > 1.0:
                y[idx] = y[idx] / y[idx].sum()
            sat = sats[sid]
            if sat.layer is SatelliteLayer.CNS:
                omega[idx] = lv[idx] * self.cns_scale
            else:
                b = lv[idx] * sat.processor_count
                if b.sum() > sat.processor_count:
                    b = b * (sat.processor_count / b.sum())
                beta[idx] = b
        return env.outcomes_for(matrix, y, beta, omega)


class OffloadEnv:
    def __init__(
        self,
        scenario: Scenario,
        config: EnvConfig | None = None,
        coverage: CoverageIndex | None = None,
        record_trajectory: bool = False,
    ):
        self.scenario = scenario
        self.config = config or EnvConfig()
        self.coverage = coverage or CoverageIndex(scenario)
        self.record_trajectory = record_trajectory
        sats = scenario.satellites
        self.layers = np.array([{"CNS": 0, "LMS": 1, "CubeSat": 2}[s.layer.value] for s in sats])
        self.cns_id = int(np.flatnonzero(self.layers == 0)[0])
        self.lms_ids = np.flatnonzero(self.layers == 1)
        self.cube_ids = np.flatnonzero(self.layers == 2)
        self.agent_ids = np.concatenate([self.lms_ids, self.cube_ids])
        self.agent_ids.sort()
        self.agent_class = np.array(
            [CLASS_LMS if self.layers[s] == 1 else CLASS_CUBESAT for s in self.agent_ids], dtype=np.int64
        )
        self.n_agents = len(self.agent_ids)
        self.agent_position = {int(s): i for i, s in enumerate(self.agent_ids)}
        self._precompute()
        self.reset(0)

    # -- static per-scenario quantities

    def _precompute(self) -> None:
        sc = self.scenario
        cfg = sc.config
        subs = sc.subtasks
        sats = sc.satellites
        w = self.config.weights
        self.mem = np.array([s.memory_mb for s in subs], dtype=float)
        self.nu = np.array([s.compute_gigacycles for s in subs], dtype=float)
        self.owner = np.array([s.owner for s in subs], dtype=np.int64)
        self.parent = np.array([s.parent_task for s in subs], dtype=np.int64)
        se_cte = np.array(
            [math.log2(1 + c.transmit_power_mw * db_to_linear(c.channel_gain_db) / cfg.noise_mw) for c in sc.ctes]
        )
        self.se = se_cte[self.owner] if len(subs) else np.zeros(0)
        zeta = np.array([s.bandwidth_hz for s in sats])
        rate = np.array([s.compute_per_processor for s in sats])
        procs = np.array([s.processor_count for s in sats])
        chi = np.array([s.compute_unit_price for s in sats])
        chi_t = np.array([s.comm_unit_price for s in sats])
        self.zeta_norm = zeta / zeta.max()
        # stand-alone service estimate of every sub-task on every server
        t_tran = self.mem[:, None] * BITS_PER_MB / (zeta[None, :] * self.se[:, None])
        p_tran = np.broadcast_to(chi_t * zeta / HZ_PER_MHZ, t_tran.shape)
        beta = np.minimum(np.sqrt(w.alpha1 * self.nu[:, None] / (w.alpha2 * chi[None, :] * rate[None, :] ** 2)), procs)
        t_comp = self.nu[:, None] / (beta * rate[None, :])
        p_comp = chi[None, :] * beta * rate[None, :]
        cns = self.cns_id
        om = np.sqrt(w.alpha1 * self.nu / (w.alpha2 * chi[cns]))
        t_comp[:, cns] = self.nu / om
        p_comp[:, cns] = chi[cns] * om
        self.est_t = t_tran + t_comp
        self.est_p = p_tran + p_comp
        self.est_cost = w.alpha1 * self.est_t + w.alpha2 * self.est_p
        self.fallback_t = self.est_t[:, cns].copy() if len(subs) else np.zeros(0)
        self.fallback_p = self.est_p[:, cns].copy() if len(subs) else np.zeros(0)
        h = self.coverage.horizon
        if len(subs):
            agents_end = self.coverage.end[self.agent_ids]  # (A, C, H)
            self._covered_any = (agents_end > np.arange(h)[None, None, :]).any(axis=0)  # (C, H)
        else:
            self._covered_any = np.zeros((len(sc.ctes), h), dtype=bool)

    # -- episode control

    def reset(self, seed: int = 0) -> tuple[GlobalState, list[Observation]]:
        sc = self.scenario
        rng = np.random.default_rng(seed)
        h = self.coverage.horizon
        n_tasks = len(sc.tasks)
        span = max(1, int(self.config.arrival_fraction * h))
        arrive = rng.integers(0, span, size=n_tasks) if n_tasks else np.zeros(0, dtype=int)
        tie = rng.permutation(n_tasks) if n_tasks else np.zeros(0, dtype=int)
        order = np.lexsort((tie, arrive)) if n_tasks else np.zeros(0, dtype=int)
        self.arrival = np.zeros(len(self.mem), dtype=np.int64)
        self.upcoming: list[int] = []
        for t in order:
            for s in sc.tasks[t].subtasks:
                self.arrival[s.id] = arrive[t]
                self.upcoming.append(s.id)
        self.pending: list[int] = []
        self.total_mb0 = float(self.mem.sum()) if len(self.mem) else 0.0
        self.slot = 0
        self.loads = np.zeros(len(sc.satellites))
        self.busy_until = np.zeros(len(sc.satellites), dtype=np.int64)
        self.outcomes: dict[int, SubtaskOutcome] = {}
        self.trajectory: list[dict] = []
        self.done = len(self.upcoming) == 0
        self._advance_to_decision()
        return self.state(), self.observations()

    def _admit(self) -> None:
        k = 0
        while k < len(self.upcoming) and self.arrival[self.upcoming[k]] <= self.slot:
            k += 1
        if k:
            self.pending.extend(self.upcoming[:k])
            del self.upcoming[:k]

    def _advance_to_decision(self) -> None:
        """Move to the next slot in which some agent has a sub-task to decide."""
        h = self.coverage.horizon
        self.decisions: list[Decision] = []
        while not self.done and self.slot < h:
            self._admit()
            next_arrival = int(self.arrival[self.upcoming[0]]) if self.upcoming else h
            if self.pending:
                owners = np.unique(self.owner[self.pending])
                cov = np.flatnonzero(self._covered_any[owners, self.slot : next_arrival].any(axis=0))
                if cov.size:
                    self.slot += int(cov[0])
                    self.decisions = self._match()
                    return
            elif not self.upcoming:
                break
            self.slot = next_arrival
        self._finish()

    def _finish(self) -> None:
        for sid in self.pending + self.upcoming:
            self._fail(sid, min(self.slot, self.coverage.horizon - 1))
        self.pending = []
        self.upcoming = []
        self.done = True

    def _fail(self, sid: int, slot: int) -> None:
        self.outcomes[sid] = SubtaskOutcome(
            sid, int(self.parent[sid]), float(self.mem[sid]), float(self.nu[sid]), self.cns_id, "CNS",
            float(self.fallback_t[sid]), float(self.fallback_p[sid]), False, slot,
        )

    def _match(self) -> list[Decision]:
        n = self.slot
        end = self.coverage.end
        claimed: set[int] = set()
        out = []
        for ai, sat in enumerate(self.agent_ids):
            for sid in self.pending:
                if sid in claimed:
                    continue
                c = self.owner[sid]
                if end[sat, c, n] > n:
                    claimed.add(sid)
                    menu, mask = self.menu_for(c, n)
                    out.append(Decision(ai, int(sat), sid, menu, mask))
                    break
        return out

    def menu_for(self, cte: int, slot: int) -> tuple[tuple[int, ...], np.ndarray]:
        end = self.coverage.end
        rem_c = end[self.cube_ids, cte, slot] - slot
        cov = rem_c > 0
        ids = self.cube_ids[cov]
        rem = rem_c[cov]
        busy = self.busy_until[ids] > slot
        order = np.lexsort((ids, -rem, busy))
        chosen = [int(i) for i in ids[order][:MENU_CUBESATS]]
        menu = chosen + [-1] * (MENU_CUBESATS - len(chosen))
        rem_l = end[self.lms_ids, cte, slot] - slot
        if (rem_l > 0).any():
            j = int(np.argmax(rem_l))  # first id on ties
            menu.append(int(self.lms_ids[j]))
        else:
            menu.append(-1)
        menu.append(self.cns_id)
        mask = np.array([m >= 0 for m in menu], dtype=bool)
        for k in range(MENU_CUBESATS):
            if menu[k] >= 0 and self.busy_until[menu[k]] > slot:
                mask[k] = False
        return tuple(menu), mask

    def remaining_s(self, server: int, cte: int, slot: int) -> float:
        if server == self.cns_id or self.layers[server] == 0:
            return (self.coverage.horizon - slot) * self.scenario.config.slot_s
        return self.coverage.remaining_slots(server, cte, slot) * self.scenario.config.slot_s

    # -- observations

    def _eta(self, sat: int) -> float:
        if self.config.eta_mode == "spectral_efficiency":
            return 0.0
        if self.layers[sat] == 2:
            return 0.0 if self.busy_until[sat] > self.slot else 1.0
        return 1.0

    def observation_vector(self, d: Decision) -> np.ndarray:
        sc = self.scenario
        cfg = sc.config
        sid = d.subtask
        n = self.slot
        c = int(self.owner[sid])
        total = self.total_mb0 or 1.0
        v = np.zeros(OBS_DIM)
        eta = self._eta(d.agent)
        if self.config.eta_mode == "spectral_efficiency":
            eta = float(self.se[sid]) / 32.0
        v[:OWN_FEATURES] = (
            self.mem[sid] / cfg.memory_range_mb[1],
            self.nu[sid] / cfg.compute_range_gcycles[1],
            float(self.mem[self.pending].sum()) / total,
            self.loads[d.agent] / total,
            self.zeta_norm[d.agent],
            eta,
        )
        horizon_s = self.coverage.horizon * cfg.slot_s
        for k, server in enumerate(d.menu):
            if server < 0:
                continue
            base = OWN_FEATURES + k * ENTRY_FEATURES
            rem = self.remaining_s(server, c, n)
            t = self.est_t[sid, server]
            busy = self.busy_until[server] > n if self.layers[server] == 2 else False
            v[base : base + ENTRY_FEATURES] = (
                float(d.mask[k]),
                float(busy),
                min(rem / horizon_s, 1.0),
                min(t / rem, 2.0) / 2.0 if rem > 0 else 1.0,
                math.tanh(self.est_cost[sid, server] / 10.0),
                float(t <= rem),
            )
        return v

    def observe_all(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(obs (S, D), mask (S, 5), active (S,)) for all agents in id order."""
        obs = np.zeros((self.n_agents, OBS_DIM))
        mask = np.zeros((self.n_agents, MENU_SIZE), dtype=bool)
        active = np.zeros(self.n_agents, dtype=bool)
        for d in self.decisions:
            obs[d.agent_index] = self.observation_vector(d)
            mask[d.agent_index] = d.mask
            active[d.agent_index] = True
        mask[~active, CNS_SLOT] = True  # keep every row a valid distribution
        return obs, mask, active

    def observations(self) -> list[Observation]:
        obs, _, _ = self.observe_all()
        return [Observation(int(s), obs[i]) for i, s in enumerate(self.agent_ids)]

    def observe(self, agent: int) -> Observation:
        """Observation of satellite ``agent``; zeros when it has nothing to decide."""
        for d in self.decisions:
            if d.agent == agent:
                return Observation(agent, self.observation_vector(d))
        if agent not in set(int(a) for a in self.agent_ids):
            raise KeyError(f"satellite {agent} is not an agent")
        return Observation(agent, np.zeros(OBS_DIM))

    def state(self) -> GlobalState:
        return GlobalState(self.slot, tuple(self.pending), self.loads.copy(), self.busy_until.copy(), self)

    def _state_features(self, st: GlobalState) -> np.ndarray:
        feats = np.zeros((len(self.mem), 8))
        if not st.pending:
            return feats
        p = np.array(st.pending)
        n = min(st.slot, self.coverage.horizon - 1)
        end = self.coverage.end
        zeta = np.array([s.bandwidth_hz for s in self.scenario.satellites])
        if self.config.eta_mode == "remaining_capacity":
            eta = np.where((self.layers == 2) & (st.busy_until > n), 0.0, 1.0)
        else:
            eta = np.zeros(len(zeta))
        feats[p, 0] = self.mem[p]
        feats[p, 1] = self.nu[p]
        feats[p, 2] = self.mem[p].sum()
        feats[p, 3] = st.loads_mb.sum()
        for col, ids in ((4, self.cube_ids), (6, self.lms_ids)):
            if ids.size == 0:
                continue
            cov = end[ids][:, self.owner[p], n] > n  # (len(ids), len(p))
            cnt = cov.sum(axis=0)
            safe = np.maximum(cnt, 1)
            feats[p, col] = np.where(cnt > 0, (cov * zeta[ids, None]).sum(axis=0) / safe, 0.0)
            if self.config.eta_mode == "spectral_efficiency":
                feats[p, col + 1] = np.where(cnt > 0, self.se[p], 0.0)
            else:
                feats[p, col + 1] = np.where(cnt > 0, (cov * eta[ids, None]).sum(axis=0) / safe, 0.0)
        return feats

    # -- dynamics

    def outcomes_for(self, matrix: OffloadMatrix, y, beta, omega) -> AllocationResult:
        """Service times/prices for explicitly given shares (used by non-closed-form hooks)."""
        sats = self.scenario.satellites
        ids = np.array(matrix.subtask_ids, dtype=np.int64)
        servers = np.array(matrix.servers, dtype=np.int64)
        zeta = np.array([sats[s].bandwidth_hz for s in servers])
        t_tran = self.mem[ids] * BITS_PER_MB / (y * zeta * self.se[ids])
        p_tran = np.array([sats[s].comm_unit_price for s in servers]) * y * zeta / HZ_PER_MHZ
        t_comp = np.zeros(len(ids))
        p_comp = np.zeros(len(ids))
        for i, s in enumerate(servers):
            sat = sats[s]
            if sat.layer is SatelliteLayer.CNS:
                t_comp[i] = self.nu[ids[i]] / omega[i]
                p_comp[i] = sat.compute_unit_price * omega[i]
            else:
                t_comp[i] = self.nu[ids[i]] / (beta[i] * sat.compute_per_processor)
                p_comp[i] = sat.compute_unit_price * beta[i] * sat.compute_per_processor
        w = averaging_weights(self.parent[ids].tolist()) if len(ids) else np.zeros(0)
        wt = self.config.weights
        obj = float(np.sum(w * (wt.alpha1 * (t_tran + t_comp) + wt.alpha2 * (p_tran + p_comp))))
        return AllocationResult(matrix, np.asarray(y, float), np.asarray(beta, float), np.asarray(omega, float),
                                t_tran, t_comp, p_tran, p_comp, obj)

    def step(
        self,
        actions: Sequence[int] | np.ndarray | dict[int, int],
        allocator_hook: AllocatorHook | None = None,
        alloc_requests: Sequence[int] | np.ndarray | dict[int, int] | None = None,
    ) -> StepResult:
        """Apply one menu index per active agent.

        ``actions`` is either an array over all agents (entries of inactive
        agents are ignored), or a dict ``agent_index -> menu index``.
        """
        if self.done:
            raise RuntimeError("episode is over; call reset()")
        hook = allocator_hook or closed_form_hook
        n = self.slot
        cfg = self.config
        dt = self.scenario.config.slot_s

        def lookup(src, ai):
            if src is None:
                return None
            if isinstance(src, dict):
                return src.get(ai)
            return src[ai]

        taken: set[int] = set()
        accepted: list[tuple[Decision, int, int]] = []  # decision, server, request
        rejected: list[tuple[Decision, int]] = []
        for d in self.decisions:
            a = lookup(actions, d.agent_index)
            if isinstance(a, AgentAction):
                a = a.index
            server = -1
            if a is not None and 0 <= int(a) < MENU_SIZE:
                server = d.menu[int(a)]
            valid = a is not None and 0 <= int(a) < MENU_SIZE and bool(d.mask[int(a)])
            if valid and self.layers[server] == 2:
                if server in taken or self.busy_until[server] > n:
                    valid = False
                else:
                    taken.add(server)
            if valid:
                req = lookup(alloc_requests, d.agent_index)
                accepted.append((d, server, -1 if req is None else int(req)))
            else:
                rejected.append((d, server))

        alloc = None
        records: dict[int, RewardRecord] = {}
        if accepted:
            matrix = OffloadMatrix(tuple(d.subtask for d, _, _ in accepted), tuple(s for _, s, _ in accepted))
            reqs = None if alloc_requests is None else [r for _, _, r in accepted]
            alloc = hook(self, matrix, reqs)
            for i, (d, server, _) in enumerate(accepted):
                sid = d.subtask
                t = float(alloc.t_tran[i] + alloc.t_comp[i])
                p = float(alloc.p_tran[i] + alloc.p_comp[i])
                ok = t <= self.remaining_s(server, int(self.owner[sid]), n)
                if ok:
                    value = cfg.gamma1 / (cfg.alpha1 * t + cfg.alpha2 * p)
                    self.outcomes[sid] = SubtaskOutcome(
                        sid, int(self.parent[sid]), float(self.mem[sid]), float(self.nu[sid]), server,
                        self.scenario.satellites[server].layer.value, t, p, True, n,
                    )
                    self.loads[server] += self.mem[sid]
                    if self.layers[server] == 2:
                        self.busy_until[server] = n + max(1, math.ceil(t / dt - 1e-12))
                else:
                    value = -cfg.gamma2
                    self._fail(sid, n)
                records[d.agent_index] = RewardRecord(d.agent, sid, server, value, ok, t, p)
        for d, server in rejected:
            self._fail(d.subtask, n)
            o = self.outcomes[d.subtask]
            records[d.agent_index] = RewardRecord(d.agent, d.subtask, server, -cfg.gamma2, False, o.t_ser, o.p_ser)

        rewards = [records[d.agent_index] for d in self.decisions]
        if self.record_trajectory:
            for r in rewards:
                self.trajectory.append(
                    {"slot": n, "agent": r.agent, "subtask": r.subtask, "action": r.server, "reward": r.value,
                     "t_ser": r.t_ser, "p_ser": r.p_ser, "success": int(r.success)}
                )
        decided = {d.subtask for d in self.decisions}
        self.pending = [s for s in self.pending if s not in decided]
        self.slot = n + 1
        self._advance_to_decision()
        return StepResult(self.state(), rewards, self.done, alloc)

    def final_outcomes(self) -> list[SubtaskOutcome]:
        return [self.outcomes[k] for k in sorted(self.outcomes)]


# ---------------------------------------------------------------------------


def reset(scenario: Scenario, seed: int, config: EnvConfig | None = None) -> tuple[OffloadEnv, GlobalState, list[Observation]]:
    env = OffloadEnv(scenario, config)
    state, obs = env.reset(seed)
    return env, state, obs


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    """``sum_k gamma**k * r_k``."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    out = 0.0
    for r in reversed(list(rewards)):
        out = float(r) + gamma * out
    return out


TRAJECTORY_COLUMNS = ("episode", "slot", "agent", "subtask", "action", "reward", "t_ser", "p_ser", "success")


def write_trajectory_csv(rows: Sequence[dict], path: str | Path, episode: int = 0) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(TRAJECTORY_COLUMNS)
        for r in rows:
            wr.writerow([r.get("episode", episode)] + [r[c] for c in TRAJECTORY_COLUMNS[1:]])
