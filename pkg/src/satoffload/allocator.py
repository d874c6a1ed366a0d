"""Stage-2 resource allocation for a fixed offloading matrix.

Given which server each sub-task goes to, the bandwidth shares ``y``, compute
shares ``beta`` (LMS/CubeSat) and dedicated CNS compute power ``omega`` separate
into independent convex problems per server, each with a closed-form or
one-dimensional-dual solution:

* bandwidth: minimise ``sum(theta / y)`` on ``sum(y) = 1``  ->  ``y ~ sqrt(theta)``
* compute:   minimise ``sum(phi / beta + lam * beta)`` on ``sum(beta) <= capacity``
* CNS power: minimise ``a / omega + b * omega``  ->  ``omega = sqrt(a / b)``

``theta``, ``phi`` and ``lam`` carry the objective weights and the per-sub-task
averaging weight ``w = 1 / (|task| * n_tasks)``. In the compute problem ``phi``
uses the server's per-processor rate where the source notation leaves the symbol
undefined.

The module also has an exhaustive grid oracle used for verification.
"""
from __future__ import annotations

import itertools
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .channel import BITS_PER_MB, HZ_PER_MHZ, LinkParams, db_to_linear
from .model import Satellite, SatelliteLayer, Scenario, SubTask

log = logging.getLogger(__name__)

BISECTION_TOL = 1e-10
BISECTION_MAX_ITER = 200
CAPACITY_TOL = 1e-9


class AllocationError(ValueError):
    """Offloading matrix is inconsistent with the scenario."""


class NumericError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Weights:
    alpha1: float = 0.5  # service-time weight
    alpha2: float = 0.5  # service-price weight

    def __post_init__(self) -> None:
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ValueError("objective weights must be non-negative")


@dataclass(frozen=True)
class Thresholds:
    """Per-sub-task caps on bandwidth share and compute share (``None`` = inactive)."""

    y_max: float = 1.0
    beta_max: float | None = None


# ---------------------------------------------------------------------------
# closed forms on plain arrays


def bandwidth_shares(theta: np.ndarray) -> np.ndarray:
    """``y_i = sqrt(theta_i) / sum_j sqrt(theta_j)``; a single entry gets the full share."""
    theta = np.asarray(theta, dtype=float)
    if theta.size == 0:
        return theta.copy()
    if np.any(theta < 0) or not np.all(np.isfinite(theta)):
        raise ValueError("bandwidth weights must be finite and non-negative")
    if theta.size == 1:
        return np.ones(1)
    r = np.sqrt(theta)
    s = r.sum()
    if s == 0:
        return np.full(theta.size, 1.0 / theta.size)
    return r / s


def bandwidth_dual(theta: np.ndarray) -> float:
    """Multiplier of ``sum(y) = 1`` at the optimum: ``(sum sqrt(theta))**2``."""
    return float(np.sqrt(np.asarray(theta, dtype=float)).sum() ** 2)


def compute_objective(beta: np.ndarray, phi: np.ndarray, lam: np.ndarray) -> float:
    return float(np.sum(phi / beta + lam * beta))


def solve_iota(phi: np.ndarray, lam: np.ndarray, capacity: float) -> float:
    """Find ``iota >= 0`` with ``sum(sqrt(phi / (lam + iota))) = capacity`` by bisection."""

    def excess(iota: float) -> float:
        return float(np.sqrt(phi / (lam + iota)).sum()) - capacity

    lo = 0.0
    ratio = float(np.sqrt(phi / lam).sum()) / capacity
    hi = float(lam.max()) * max(ratio**2 - 1.0, 0.0) + 1.0
    grow = 0
    while excess(hi) > 0:
        lo, hi = hi, hi * 2.0
        grow += 1
        if grow > BISECTION_MAX_ITER:
            raise NumericError(f"could not bracket dual variable (hi={hi:g})")
    it = 0
    while hi - lo > BISECTION_TOL * max(1.0, hi) and it < BISECTION_MAX_ITER:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
        it += 1
    iota = 0.5 * (lo + hi)
    resid = abs(excess(iota))
    if resid > CAPACITY_TOL:
        # the midpoint may sit a hair on the wrong side; take the better endpoint
        iota = min((lo, hi, iota), key=lambda v: abs(excess(v)))
        resid = abs(excess(iota))
    if resid > CAPACITY_TOL:
        raise NumericError(
            f"dual bisection stopped after {it} iterations with residual {resid:.3e} "
            f"(bracket [{lo:.6g}, {hi:.6g}], capacity {capacity})"
        )
    return iota


def compute_shares(phi: np.ndarray, lam: np.ndarray, capacity: float) -> tuple[np.ndarray, float]:
    """Optimal compute shares and the capacity multiplier ``iota``.

    Branch 1 ignores the capacity (``iota = 0``); branch 2 makes it bind. Of the
    feasible candidates the one with the lower objective is returned.
    """
    phi = np.asarray(phi, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if phi.size == 0:
        return phi.copy(), 0.0
    if capacity <= 0:
        raise ValueError("compute capacity must be positive")
    if np.any(phi <= 0) or np.any(lam <= 0):
        raise ValueError("compute weights must be strictly positive")
    candidates = []
    b1 = np.sqrt(phi / lam)
    if b1.sum() <= capacity:
        candidates.append((compute_objective(b1, phi, lam), b1, 0.0))
    else:
        iota = solve_iota(phi, lam, capacity)
        b2 = np.sqrt(phi / (lam + iota))
        candidates.append((compute_objective(b2, phi, lam), b2, iota))
    _, beta, iota = min(candidates, key=lambda c: c[0])
    return beta, iota


def cns_power(nu, alpha1: float, alpha2: float, chi_h: float):
    """``omega* = sqrt(alpha1 * nu / (alpha2 * chi_h))`` (works on scalars and arrays)."""
    if alpha1 <= 0 or alpha2 <= 0 or chi_h <= 0:
        raise ValueError("alpha1, alpha2 and chi_h must be positive")
    nu_arr = np.asarray(nu, dtype=float)
    if np.any(nu_arr <= 0):
        raise ValueError("compute demand must be positive")
    out = np.sqrt(alpha1 * nu_arr / (alpha2 * chi_h))
    return float(out) if np.ndim(out) == 0 else out


def cap_and_redistribute(x: np.ndarray, cap: float, total: float) -> np.ndarray:
    """Clip entries at ``cap`` and hand the freed share to the unclipped ones."""
    x = np.asarray(x, dtype=float).copy()
    if cap >= total or np.all(x <= cap):
        return x
    log.warning("allocation threshold %.4g active on %d entries", cap, int((x > cap).sum()))
    fixed = np.zeros(x.size, dtype=bool)
    budget = min(total, float(x.sum()))
    for _ in range(x.size):
        over = (x > cap) & ~fixed
        if not over.any():
            break
        x[over] = cap
        fixed |= over
        free = ~fixed
        rest = budget - cap * fixed.sum()
        if free.any() and x[free].sum() > 0:
            x[free] *= max(rest, 0.0) / x[free].sum()
    return x


# ---------------------------------------------------------------------------
# per-server operations on domain objects


def _spectral_efficiency(link: LinkParams) -> float:
    se = link.spectral_efficiency
    if not se > 0:
        raise ValueError("zero spectral efficiency")
    return se


def bandwidth_theta(
    server: Satellite,
    subtasks: Sequence[SubTask],
    weights: Weights,
    links: Sequence[LinkParams],
    subtask_weights: Sequence[float] | None = None,
) -> np.ndarray:
    w = np.ones(len(subtasks)) if subtask_weights is None else np.asarray(subtask_weights, float)
    mem = np.array([s.memory_mb for s in subtasks], dtype=float)
    se = np.array([_spectral_efficiency(l) for l in links], dtype=float)
    return weights.alpha1 * w * mem * BITS_PER_MB / (server.bandwidth_hz * se)


def allocate_bandwidth(
    server: Satellite,
    assigned_subtasks: Sequence[SubTask],
    weights: Weights,
    links: Sequence[LinkParams],
    subtask_weights: Sequence[float] | None = None,
    y_max: float = 1.0,
) -> np.ndarray:
    """Bandwidth shares of the sub-tasks sharing ``server``; they sum to 1."""
    if len(assigned_subtasks) == 0:
        return np.zeros(0)
    if len(links) != len(assigned_subtasks):
        raise ValueError("one link per sub-task is required")
    theta = bandwidth_theta(server, assigned_subtasks, weights, links, subtask_weights)
    return cap_and_redistribute(bandwidth_shares(theta), y_max, 1.0)


def compute_coefficients(
    server: Satellite,
    subtasks: Sequence[SubTask],
    weights: Weights,
    subtask_weights: Sequence[float] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    w = np.ones(len(subtasks)) if subtask_weights is None else np.asarray(subtask_weights, float)
    nu = np.array([s.compute_gigacycles for s in subtasks], dtype=float)
    omega = server.compute_per_processor
    phi = weights.alpha1 * w * nu / omega
    lam = weights.alpha2 * w * server.compute_unit_price * omega
    return phi, lam


def allocate_compute(
    server: Satellite,
    assigned_subtasks: Sequence[SubTask],
    weights: Weights,
    subtask_weights: Sequence[float] | None = None,
    beta_max: float | None = None,
) -> tuple[np.ndarray, float]:
    """Compute shares on an LMS or CubeSat and the capacity multiplier."""
    if server.layer is SatelliteLayer.CNS:
        raise ValueError("CNS compute is allocated with allocate_cns_power")
    if len(assigned_subtasks) == 0:
        return np.zeros(0), 0.0
    phi, lam = compute_coefficients(server, assigned_subtasks, weights, subtask_weights)
    beta, iota = compute_shares(phi, lam, server.processor_count)
    cap = server.processor_count if beta_max is None else beta_max
    return cap_and_redistribute(beta, cap, server.processor_count), iota


def allocate_cns_power(subtask: SubTask, weights: Weights, chi_h: float) -> float:
    return cns_power(subtask.compute_gigacycles, weights.alpha1, weights.alpha2, chi_h)


# ---------------------------------------------------------------------------
# whole-matrix allocation


@dataclass(frozen=True)
class OffloadMatrix:
    """Sparse form of the binary matrix X: ``servers[i]`` hosts ``subtask_ids[i]``.

    Holding one server id per sub-task makes "exactly one server per sub-task"
    true by construction.
    """

    subtask_ids: tuple[int, ...]
    servers: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.subtask_ids) != len(self.servers):
            raise ValueError("subtask_ids and servers differ in length")
        if len(set(self.subtask_ids)) != len(self.subtask_ids):
            raise ValueError("a sub-task appears twice in the offloading matrix")

    def __len__(self) -> int:
        return len(self.subtask_ids)

    def dense(self, n_servers: int) -> np.ndarray:
        x = np.zeros((len(self), n_servers), dtype=np.int8)
        x[np.arange(len(self)), list(self.servers)] = 1
        return x

    @classmethod
    def from_dense(cls, subtask_ids: Sequence[int], x: np.ndarray) -> "OffloadMatrix":
        x = np.asarray(x)
        if not np.isin(x, (0, 1)).all():
            raise ValueError("offloading matrix must be binary")
        if not (x.sum(axis=1) == 1).all():
            raise ValueError("each sub-task must be assigned to exactly one server")
        return cls(tuple(int(s) for s in subtask_ids), tuple(int(j) for j in x.argmax(axis=1)))

    def cubesat_conflicts(self, scenario: Scenario) -> list[int]:
        """CubeSat ids hosting more than one sub-task."""
        counts: dict[int, int] = defaultdict(int)
        for sid in self.servers:
            if scenario.satellites[sid].layer is SatelliteLayer.CUBESAT:
                counts[sid] += 1
        return sorted(s for s, c in counts.items() if c > 1)


@dataclass
class AllocationResult:
    """Shares aligned with ``matrix.subtask_ids``.

    ``beta`` is NaN for CNS-bound sub-tasks and ``omega_cns`` is NaN for the rest.
    """

    matrix: OffloadMatrix
    y: np.ndarray
    beta: np.ndarray
    omega_cns: np.ndarray
    t_tran: np.ndarray
    t_comp: np.ndarray
    p_tran: np.ndarray
    p_comp: np.ndarray
    objective: float
    dual_iota: dict[int, float] = field(default_factory=dict)
    dual_mu: dict[int, float] = field(default_factory=dict)

    @property
    def t_ser(self) -> np.ndarray:
        return self.t_tran + self.t_comp

    @property
    def p_ser(self) -> np.ndarray:
        return self.p_tran + self.p_comp

    def beta_by_subtask(self) -> dict[int, float]:
        return {s: float(b) for s, b in zip(self.matrix.subtask_ids, self.beta) if not math.isnan(b)}

    def omega_by_subtask(self) -> dict[int, float]:
        return {
            s: float(w) for s, w in zip(self.matrix.subtask_ids, self.omega_cns) if not math.isnan(w)
        }

    def server_sums(self) -> dict[int, tuple[float, float]]:
        """Per server: (sum of y, sum of beta)."""
        out: dict[int, list[float]] = defaultdict(lambda: [0.0, 0.0])
        for i, sid in enumerate(self.matrix.servers):
            out[sid][0] += self.y[i]
            if not math.isnan(self.beta[i]):
                out[sid][1] += self.beta[i]
        return {k: (v[0], v[1]) for k, v in sorted(out.items())}


def averaging_weights(parents: Sequence[int]) -> np.ndarray:
    """``1 / (|task| * n_tasks)`` per sub-task, counting only the listed sub-tasks."""
    counts: dict[int, int] = defaultdict(int)
    for p in parents:
        counts[p] += 1
    n_tasks = len(counts)
    return np.array([1.0 / (counts[p] * n_tasks) for p in parents], dtype=float)


def eta_restricted(parents: Sequence[int], t_ser: np.ndarray, p_ser: np.ndarray, weights: Weights) -> float:
    """Per-task means, then mean over tasks, then the weighted sum."""
    if len(parents) == 0:
        return 0.0
    w = averaging_weights(parents)
    return float(np.sum(w * (weights.alpha1 * t_ser + weights.alpha2 * p_ser)))


def allocate_all(
    scenario: Scenario,
    offload_matrix: OffloadMatrix,
    weights: Weights,
    *,
    slot: int | None = None,
    coverage=None,
    thresholds: Thresholds | None = None,
    check: bool = True,
) -> AllocationResult:
    """Solve every server's sub-problems for the given matrix.

    ``coverage`` is a :class:`satoffload.env.CoverageIndex`-like object with a
    ``covers(sat, cte, slot)`` method; when omitted, any window inside the horizon
    counts. Servers are processed in id order so the result is deterministic.
    """
    th = thresholds or Thresholds()
    subs = scenario.subtasks
    tasks = [subs[i] for i in offload_matrix.subtask_ids]
    sats = scenario.satellites
    if check:
        _check_matrix(scenario, offload_matrix, tasks, slot, coverage)

    n = len(tasks)
    y = np.zeros(n)
    beta = np.full(n, np.nan)
    omega = np.full(n, np.nan)
    t_tran = np.zeros(n)
    t_comp = np.zeros(n)
    p_tran = np.zeros(n)
    p_comp = np.zeros(n)
    if n == 0:
        return AllocationResult(offload_matrix, y, beta, omega, t_tran, t_comp, p_tran, p_comp, 0.0)

    parents = [t.parent_task for t in tasks]
    w = averaging_weights(parents)
    cfg = scenario.config
    mem = np.array([t.memory_mb for t in tasks])
    nu = np.array([t.compute_gigacycles for t in tasks])
    ctes = scenario.ctes
    se = np.array(
        [
            math.log2(1.0 + ctes[t.owner].transmit_power_mw * db_to_linear(ctes[t.owner].channel_gain_db) / cfg.noise_mw)
            for t in tasks
        ]
    )
    groups: dict[int, list[int]] = defaultdict(list)
    for i, sid in enumerate(offload_matrix.servers):
        groups[sid].append(i)

    iotas: dict[int, float] = {}
    mus: dict[int, float] = {}
    for sid in sorted(groups):
        idx = np.array(groups[sid])
        sat = sats[sid]
        theta = weights.alpha1 * w[idx] * mem[idx] * BITS_PER_MB / (sat.bandwidth_hz * se[idx])
        yy = cap_and_redistribute(bandwidth_shares(theta), th.y_max, 1.0)
        mus[sid] = bandwidth_dual(theta)
        y[idx] = yy
        t_tran[idx] = mem[idx] * BITS_PER_MB / (yy * sat.bandwidth_hz * se[idx])
        p_tran[idx] = sat.comm_unit_price * yy * sat.bandwidth_hz / HZ_PER_MHZ
        if sat.layer is SatelliteLayer.CNS:
            om = np.atleast_1d(cns_power(nu[idx], weights.alpha1, weights.alpha2, sat.compute_unit_price))
            omega[idx] = om
            t_comp[idx] = nu[idx] / om
            p_comp[idx] = sat.compute_unit_price * om
            iotas[sid] = 0.0
        else:
            rate = sat.compute_per_processor
            phi = weights.alpha1 * w[idx] * nu[idx] / rate
            lam = weights.alpha2 * w[idx] * sat.compute_unit_price * rate
            bb, iota = compute_shares(phi, lam, sat.processor_count)
            cap = sat.processor_count if th.beta_max is None else th.beta_max
            bb = cap_and_redistribute(bb, cap, sat.processor_count)
            beta[idx] = bb
            iotas[sid] = iota
            t_comp[idx] = nu[idx] / (bb * rate)
            p_comp[idx] = sat.compute_unit_price * bb * rate
    obj = float(np.sum(w * (weights.alpha1 * (t_tran + t_comp) + weights.alpha2 * (p_tran + p_comp))))
    return AllocationResult(offload_matrix, y, beta, omega, t_tran, t_comp, p_tran, p_comp, obj, iotas, mus)


def _check_matrix(scenario, matrix, tasks, slot, coverage) -> None:
    sats = scenario.satellites
    for sid in matrix.servers:
        if not 0 <= sid < len(sats):
            raise AllocationError(f"unknown server id {sid}")
    conflicts = matrix.cubesat_conflicts(scenario)
    if conflicts:
        raise AllocationError(f"CubeSats {conflicts} host more than one sub-task")
    if coverage is None:
        from .model import coverage_windows

        pairs = {(w.satellite, w.cte) for w in coverage_windows(scenario)}
        for t, sid in zip(tasks, matrix.servers):
            if (sid, t.owner) not in pairs:
                raise AllocationError(f"satellite {sid} never covers CTE {t.owner} (sub-task {t.id})")
    else:
        for t, sid in zip(tasks, matrix.servers):
            ok = coverage.covers(sid, t.owner, 0 if slot is None else slot)
            if not ok:
                raise AllocationError(
                    f"satellite {sid} does not cover CTE {t.owner} (sub-task {t.id}) at slot {slot}"
                )


# ---------------------------------------------------------------------------
# verification oracle


MAX_ORACLE_VARS = 4


@dataclass(frozen=True)
class BandwidthSubproblem:
    """``min sum(theta / y)`` over ``y > 0, sum(y) = 1``."""

    theta: np.ndarray

    @property
    def n_vars(self) -> int:
        return int(np.size(self.theta))

    def objective(self, y: np.ndarray) -> float:
        return float(np.sum(np.asarray(self.theta) / y))

    def gradient(self, y: np.ndarray) -> np.ndarray:
        return -np.asarray(self.theta) / np.asarray(y) ** 2

    def term_scale(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(self.theta) / np.asarray(y) ** 2

    def closed_form(self) -> np.ndarray:
        return bandwidth_shares(self.theta)


@dataclass(frozen=True)
class ComputeSubproblem:
    """``min sum(phi / beta + lam * beta)`` over ``beta > 0, sum(beta) <= capacity``."""

    phi: np.ndarray
    lam: np.ndarray
    capacity: float = 1.0

    @property
    def n_vars(self) -> int:
        return int(np.size(self.phi))

    def objective(self, beta: np.ndarray) -> float:
        return compute_objective(np.asarray(beta), np.asarray(self.phi), np.asarray(self.lam))

    def gradient(self, beta: np.ndarray) -> np.ndarray:
        return -np.asarray(self.phi) / np.asarray(beta) ** 2 + np.asarray(self.lam)

    def term_scale(self, beta: np.ndarray) -> np.ndarray:
        return np.asarray(self.phi) / np.asarray(beta) ** 2

    def closed_form(self) -> np.ndarray:
        return compute_shares(self.phi, self.lam, self.capacity)[0]


@dataclass(frozen=True)
class CnsSubproblem:
    """``min a / omega + b * omega`` over ``0 < omega <= omega_max``."""

    a: float  # alpha1 * nu
    b: float  # alpha2 * chi_h
    omega_max: float

    n_vars = 1

    def objective(self, omega) -> float:
        om = float(np.asarray(omega).reshape(-1)[0])
        return self.a / om + self.b * om

    def gradient(self, omega) -> np.ndarray:
        om = float(np.asarray(omega).reshape(-1)[0])
        return np.array([-self.a / om**2 + self.b])

    def term_scale(self, omega) -> np.ndarray:
        om = float(np.asarray(omega).reshape(-1)[0])
        return np.array([self.a / om**2])

    def closed_form(self) -> np.ndarray:
        return np.array([math.sqrt(self.a / self.b)])


def _minplus(acc: np.ndarray, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``out[t] = min_i acc[t - i] + f[i]`` and the minimising ``i``."""
    k = acc.size
    padded = np.concatenate([np.full(k - 1, np.inf), acc])
    # row t holds acc[t - k + 1 .. t]; column p pairs with i = k - 1 - p
    vals = np.lib.stride_tricks.sliding_window_view(padded, k) + f[::-1]
    p = np.argmin(vals, axis=1)
    return vals[np.arange(k), p], k - 1 - p


def brute_force_oracle(subproblem, grid_step: float) -> tuple[np.ndarray, float]:
    """Exhaustive minimisation over the grid ``{grid_step, 2*grid_step, ...}``.

    Bandwidth problems use the simplex face ``sum(y) = 1``; compute problems the
    region ``sum(beta) <= capacity``; the CNS problem the interval
    ``(0, omega_max]``. Separable objectives let the exhaustive search run as a
    min-plus dynamic programme over the number of grid units used, which visits
    every grid point implicitly and returns the exact grid minimiser.
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    n = subproblem.n_vars
    if n > MAX_ORACLE_VARS:
        raise ValueError(f"oracle refuses {n} variables (limit {MAX_ORACLE_VARS})")
    if n == 0:
        raise ValueError("empty sub-problem")

    if isinstance(subproblem, CnsSubproblem):
        k = int(math.floor(subproblem.omega_max / grid_step + 1e-9))
        if k < 1:
            raise ValueError("grid is empty")
        grid = grid_step * np.arange(1, k + 1)
        vals = subproblem.a / grid + subproblem.b * grid
        i = int(np.argmin(vals))
        return np.array([grid[i]]), float(vals[i])

    if isinstance(subproblem, BandwidthSubproblem):
        total_units = int(round(1.0 / grid_step))
        if abs(total_units * grid_step - 1.0) > 1e-9:
            raise ValueError("grid_step must divide 1 for the bandwidth simplex")
        exact_sum = True
        coef = [lambda u, t=t: t / u for t in np.asarray(subproblem.theta, float)]
    elif isinstance(subproblem, ComputeSubproblem):
        total_units = int(math.floor(subproblem.capacity / grid_step + 1e-9))
        exact_sum = False
        coef = [
            lambda u, p=p, l=l: p / u + l * u
            for p, l in zip(np.asarray(subproblem.phi, float), np.asarray(subproblem.lam, float))
        ]
    else:
        raise TypeError(f"unsupported sub-problem {type(subproblem).__name__}")
    if total_units < n:
        raise ValueError("grid is empty: not enough grid units for every variable")

    units = np.arange(total_units + 1)
    u_pos = units * grid_step
    tables = []
    for fn in coef:
        f = np.full(total_units + 1, np.inf)
        f[1:] = fn(u_pos[1:])
        tables.append(f)
    acc = tables[0].copy()
    choices: list[np.ndarray] = []
    for f in tables[1:-1]:
        acc, arg = _minplus(acc, f)
        choices.append(arg)
    if n > 1:
        # last variable: only the final total matters, so an O(K) pass suffices
        last = tables[-1]
        if exact_sum:
            cand = acc[::-1] + last  # units i for the last variable, total_units - i before
            i_last = int(np.argmin(cand))
            end = total_units - i_last
        else:
            pref = np.minimum.accumulate(acc)
            pref_arg = np.maximum.accumulate(np.where(acc == pref, np.arange(acc.size), 0))
            cand = pref[::-1] + last
            i_last = int(np.argmin(cand))
            end = int(pref_arg[total_units - i_last])
        best = float(cand[i_last])
    else:
        i_last = None
        end = total_units if exact_sum else int(np.argmin(acc))
        best = float(acc[end])
    if not math.isfinite(best):
        raise ValueError("grid is empty")
    alloc_units = [] if i_last is None else [i_last]
    rem = end
    for choice in reversed(choices):
        i = int(choice[rem])
        alloc_units.append(i)
        rem -= i
    alloc_units.append(rem)
    x = np.array(alloc_units[::-1], dtype=float) * grid_step
    return x, best


def resolution_bound(subproblem, x_star: np.ndarray, grid_step: float) -> float:
    """Upper bound on how far the grid optimum can sit above the true optimum.

    Rounding the optimum onto the grid moves each coordinate by at most one step,
    so by convexity the objective rises by at most ``step * ||grad||_1`` taken at
    the rounded point; a factor of 2 and the curvature term cover the shift.
    """
    g = np.abs(subproblem.gradient(np.maximum(np.asarray(x_star) - grid_step, grid_step / 2)))
    return float(2.0 * grid_step * g.sum())


def kkt_residual(subproblem, x: np.ndarray, multiplier: float, h: float = 1e-6) -> float:
    """Largest relative stationarity residual of the Lagrangian, by central differences.

    Component ``i`` is ``|df/dx_i + multiplier|`` divided by the size of the
    decreasing term of ``df/dx_i``, so the figure is unit-free.
    """
    x = np.asarray(x, dtype=float)
    scale = subproblem.term_scale(x)
    worst = 0.0
    for i in range(x.size):
        step = h * abs(x[i])
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        d = (subproblem.objective(xp) - subproblem.objective(xm)) / (2 * step)
        worst = max(worst, abs(d + multiplier) / scale[i])
    return worst


def all_matrices(menus: Sequence[Sequence[int]], cubesats: set[int]) -> Iterator[tuple[int, ...]]:
    """Every assignment respecting single CubeSat occupancy (used by oracle tests)."""
    for combo in itertools.product(*menus):
        picked = [s for s in combo if s in cubesats]
        if len(picked) == len(set(picked)):
            yield combo


# ---------------------------------------------------------------------------
# verification suite


def random_subproblem(kind: str, rng: np.random.Generator, max_vars: int = MAX_ORACLE_VARS):
    """A sub-problem with coefficients drawn from the Table III-like ranges.

    Compute instances mix LMS-like servers (capacity rarely binds) and
    CubeSat-like servers (capacity binds), so both branches get exercised.
    """
    n = int(rng.integers(1, max_vars + 1))
    a1 = float(rng.uniform(0.1, 0.9))
    a2 = 1.0 - a1
    w = 1.0 / (n * rng.integers(1, 6))
    mem = rng.uniform(10, 90, n)
    nu = rng.uniform(15, 70, n)
    if kind == "bandwidth":
        zeta = rng.choice([40.0, 200.0])  # MHz
        se = rng.uniform(20.0, 30.0, n)
        return BandwidthSubproblem(a1 * w * mem * BITS_PER_MB / (zeta * HZ_PER_MHZ * se))
    if kind == "compute":
        omega, chi = (80.0, 0.3) if rng.random() < 0.5 else (10.0, 0.08)
        cap = float(rng.choice([1.0, 2.0]))
        return ComputeSubproblem(a1 * w * nu / omega, a2 * w * chi * omega * np.ones(n), cap)
    if kind == "cns":
        chi = float(rng.uniform(1.0, 20.0))
        return CnsSubproblem(a1 * float(nu[0]), a2 * chi, omega_max=50.0)
    raise ValueError(f"unknown sub-problem kind {kind!r}")


def closed_form_multiplier(sub) -> float:
    if isinstance(sub, BandwidthSubproblem):
        return bandwidth_dual(np.asarray(sub.theta))
    if isinstance(sub, ComputeSubproblem):
        return compute_shares(sub.phi, sub.lam, sub.capacity)[1]
    return 0.0


@dataclass
class VerifyRecord:
    kind: str
    index: int
    n_vars: int
    closed_objective: float
    grid_objective: float
    bound: float
    kkt: float
    passed: bool


def verify_allocator(
    n_instances: int = 100,
    grid_step: float = 1e-3,
    seed: int = 0,
    kkt_tol: float = 1e-8,
    kinds: Sequence[str] = ("bandwidth", "compute", "cns"),
) -> list[VerifyRecord]:
    """Closed forms against the grid oracle on random instances.

    An instance passes when the closed form's objective is at most the grid
    optimum plus the resolution bound and its KKT residual is within
    ``kkt_tol``.
    """
    rng = np.random.default_rng(seed)
    out = []
    for kind in kinds:
        for i in range(n_instances):
            sub = random_subproblem(kind, rng)
            x = sub.closed_form()
            f_closed = sub.objective(x)
            _, f_grid = brute_force_oracle(sub, grid_step)
            bound = resolution_bound(sub, x, grid_step)
            kkt = kkt_residual(sub, x, closed_form_multiplier(sub))
            ok = f_closed <= f_grid + bound and kkt <= kkt_tol
            out.append(VerifyRecord(kind, i, sub.n_vars, f_closed, f_grid, bound, kkt, bool(ok)))
    return out
