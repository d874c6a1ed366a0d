"""Three-layer satellite network: entities, circular-orbit motion, coverage and scenario generation.

Units used throughout the package:

* lengths in km (orbital velocity is reported in m/s),
* data in MB (1 MB = 8e6 bit),
* compute demand in Gigacycles, compute rates in Gigacycles/s,
* bandwidth in Hz, power in mW, time in seconds.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterable

import numpy as np

EARTH_RADIUS_KM = 6371.0
EARTH_MASS_KG = 5.9722e24
GRAVITATIONAL_CONSTANT = 6.67e-11
EARTH_MU = EARTH_MASS_KG * GRAVITATIONAL_CONSTANT  # m^3 / s^2

# Printed CNS bandwidth. Kept for reference; see ScenarioConfig.cns_bandwidth_hz.
CNS_BANDWIDTH_PRINTED_HZ = 1e3

MAX_SEED = 2**64 - 1


class ScenarioGenerationError(RuntimeError):
    """Raised when a configuration cannot produce a valid scenario."""


class SatelliteLayer(str, enum.Enum):
    CNS = "CNS"
    LMS = "LMS"
    CUBESAT = "CubeSat"


# ---------------------------------------------------------------------------
# orbital mechanics


def orbital_radius(altitude_km: float) -> float:
    """Orbit radius (km) of a circular orbit at ``altitude_km``."""
    if altitude_km < 0:
        raise ValueError(f"altitude must be non-negative, got {altitude_km}")
    return altitude_km + EARTH_RADIUS_KM


def orbital_velocity(radius_km: float) -> float:
    """Circular orbital speed in m/s."""
    if radius_km <= 0:
        raise ValueError(f"orbit radius must be positive, got {radius_km}")
    return math.sqrt(EARTH_MU / (radius_km * 1e3))


def orbital_period(radius_km: float) -> float:
    """Circular orbital period in seconds."""
    if radius_km <= 0:
        raise ValueError(f"orbit radius must be positive, got {radius_km}")
    r_m = radius_km * 1e3
    return 2.0 * math.pi * math.sqrt(r_m**3 / EARTH_MU)


def ground_speed_km_s(altitude_km: float) -> float:
    """Speed of the sub-satellite point along the ground track (km/s)."""
    r = orbital_radius(altitude_km)
    return orbital_velocity(r) * EARTH_RADIUS_KM / r / 1e3


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class Satellite:
    id: int
    layer: SatelliteLayer
    altitude_km: float
    bandwidth_hz: float
    compute_per_processor: float  # Gigacycles/s
    processor_count: float
    comm_unit_price: float
    compute_unit_price: float
    footprint_radius_km: float  # math.inf for a footprint covering the whole region
    # ground track: straight line through the region, unit heading, signed
    # perpendicular offset from the region centre, time of closest approach
    heading_rad: float = 0.0
    offset_km: float = 0.0
    closest_approach_s: float = 0.0
    stationary: bool = False

    def __post_init__(self) -> None:
        if self.bandwidth_hz <= 0 or self.compute_per_processor <= 0:
            raise ValueError(f"satellite {self.id}: bandwidth and compute must be positive")
        if self.processor_count < 1:
            raise ValueError(f"satellite {self.id}: processor_count must be >= 1")
        if self.comm_unit_price <= 0 or self.compute_unit_price <= 0:
            raise ValueError(f"satellite {self.id}: prices must be positive")

    @property
    def ground_speed_km_s(self) -> float:
        return 0.0 if self.stationary else ground_speed_km_s(self.altitude_km)

    @property
    def period_s(self) -> float:
        return orbital_period(orbital_radius(self.altitude_km))


@dataclass(frozen=True)
class CTE:
    id: int
    x_km: float
    y_km: float
    cached_memory_mb: float
    transmit_power_mw: float
    channel_gain_db: float

    def __post_init__(self) -> None:
        if self.transmit_power_mw <= 0:
            raise ValueError(f"CTE {self.id}: transmit power must be positive")


@dataclass(frozen=True)
class SubTask:
    id: int
    parent_task: int
    owner: int  # CTE id
    memory_mb: float
    compute_gigacycles: float


@dataclass(frozen=True)
class Task:
    id: int
    subtasks: tuple[SubTask, ...]

    @property
    def memory_mb(self) -> float:
        return float(sum(s.memory_mb for s in self.subtasks))

    @property
    def compute_gigacycles(self) -> float:
        return float(sum(s.compute_gigacycles for s in self.subtasks))


@dataclass(frozen=True)
class CoverageWindow:
    """Slots ``start_slot <= n < end_slot`` during which ``cte`` is inside the footprint."""

    satellite: int
    cte: int
    start_slot: int
    end_slot: int
    t_max_s: float
    pass_s: float  # full (untruncated) pass duration


@dataclass(frozen=True)
class ScenarioConfig:
    region_area_km2: float = 500.0
    n_cns: int = 1
    n_lms: int = 5
    n_cubesat: int = 25
    n_cte: int = 500
    cte_count_mode: str = "fixed"  # "fixed" or "poisson"
    n_tasks: int = 100
    subtasks_per_task: int = 5
    memory_range_mb: tuple[float, float] = (10.0, 90.0)
    compute_range_gcycles: tuple[float, float] = (15.0, 70.0)
    cns_altitude_km: float = 35786.0
    lms_altitude_km: float = 1000.0
    cubesat_altitude_km: float = 200.0
    cubesat_bandwidth_hz: float = 40e6
    lms_bandwidth_hz: float = 200e6
    cns_bandwidth_hz: float = 1e9
    cubesat_compute: float = 10.0
    lms_compute: float = 80.0
    cns_compute: float = 500.0
    cubesat_processors: float = 1.0
    lms_processors: float = 1.0
    cns_processors: float = 1.0
    cubesat_compute_price: float = 0.08
    lms_compute_price: float = 0.3
    cns_compute_price: float = 10.0
    cubesat_comm_price: float = 0.08e-4
    lms_comm_price: float = 0.12e-4
    cns_comm_price: float = 0.30e-4
    cte_power_mw: float = 150.0
    channel_gain_db: float = 5.0
    noise_mw: float = 1e-5
    cubesat_footprint_km: float = 150.0
    lms_footprint_km: float = 400.0
    slot_s: float = 1.0
    horizon_slots: int = 300
    min_cubesats_per_cte: int = 3
    max_generation_retries: int = 50

    def validate(self) -> None:
        counts = (self.n_cns, self.n_lms, self.n_cubesat, self.n_cte, self.n_tasks)
        if min(counts) < 0:
            raise ValueError("counts must be non-negative")
        if self.n_cns < 1:
            raise ValueError("at least one CNS is required (it is the fallback server)")
        if self.subtasks_per_task < 1:
            raise ValueError("subtasks_per_task must be >= 1")
        if self.cte_count_mode not in ("fixed", "poisson"):
            raise ValueError(f"unknown cte_count_mode {self.cte_count_mode!r}")
        for name in ("memory_range_mb", "compute_range_gcycles"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must satisfy 0 < lo <= hi, got {(lo, hi)}")
        if not (self.cns_compute_price > self.lms_compute_price > self.cubesat_compute_price):
            raise ValueError("compute prices must be ordered CNS > LMS > CubeSat")
        if self.slot_s <= 0 or self.horizon_slots < 1:
            raise ValueError("slot_s must be positive and horizon_slots >= 1")
        if self.region_area_km2 <= 0:
            raise ValueError("region_area_km2 must be positive")

    @property
    def region_side_km(self) -> float:
        return math.sqrt(self.region_area_km2)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["memory_range_mb"] = list(self.memory_range_mb)
        d["compute_range_gcycles"] = list(self.compute_range_gcycles)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        kw = dict(d)
        for key in ("memory_range_mb", "compute_range_gcycles"):
            if key in kw:
                kw[key] = tuple(float(v) for v in kw[key])
        return cls(**kw)


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    seed: int
    satellites: tuple[Satellite, ...]
    ctes: tuple[CTE, ...]
    tasks: tuple[Task, ...]
    _subtasks: tuple[SubTask, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self) -> None:
        flat = tuple(s for t in self.tasks for s in t.subtasks)
        for i, s in enumerate(flat):
            if s.id != i:
                raise ValueError("sub-task ids must be 0..n-1 in task order")
        for i, c in enumerate(self.ctes):
            if c.id != i:
                raise ValueError("CTE ids must be 0..n-1")
        for i, sat in enumerate(self.satellites):
            if sat.id != i:
                raise ValueError("satellite ids must be 0..n-1")
        object.__setattr__(self, "_subtasks", flat)

    @property
    def subtasks(self) -> tuple[SubTask, ...]:
        return self._subtasks

    @property
    def horizon_slots(self) -> int:
        return self.config.horizon_slots

    def by_layer(self, layer: SatelliteLayer) -> list[Satellite]:
        return [s for s in self.satellites if s.layer is layer]

    @property
    def cns(self) -> Satellite:
        return self.by_layer(SatelliteLayer.CNS)[0]

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": "satoffload-scenario/1",
            "seed": int(self.seed),
            "config": self.config.to_dict(),
            "satellites": [{**asdict(s), "layer": s.layer.value} for s in self.satellites],
            "ctes": [asdict(c) for c in self.ctes],
            "tasks": [
                {"id": t.id, "subtasks": [asdict(s) for s in t.subtasks]} for t in self.tasks
            ],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Scenario":
        sats = tuple(
            Satellite(**{**s, "layer": SatelliteLayer(s["layer"])}) for s in d["satellites"]
        )
        ctes = tuple(CTE(**c) for c in d["ctes"])
        tasks = tuple(
            Task(t["id"], tuple(SubTask(**s) for s in t["subtasks"])) for t in d["tasks"]
        )
        return cls(ScenarioConfig.from_dict(d["config"]), int(d["seed"]), sats, ctes, tasks)


def _finite(v: float) -> float | str:
    return "inf" if math.isinf(v) else v


def dumps_scenario(scenario: Scenario) -> str:
    d = scenario.to_dict()
    for s in d["satellites"]:
        s["footprint_radius_km"] = _finite(s["footprint_radius_km"])
    return json.dumps(d, sort_keys=True, indent=1) + "\n"


def loads_scenario(text: str) -> Scenario:
    d = json.loads(text)
    for s in d["satellites"]:
        s["footprint_radius_km"] = float(s["footprint_radius_km"])
    return Scenario.from_dict(d)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(dumps_scenario(scenario))


def load_scenario(path: str | Path) -> Scenario:
    return loads_scenario(Path(path).read_text())


# ---------------------------------------------------------------------------
# generation


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def _moving_satellite(
    rng: np.random.Generator, sid: int, layer: SatelliteLayer, cfg: ScenarioConfig
) -> Satellite:
    side = cfg.region_side_km
    if layer is SatelliteLayer.LMS:
        alt, bw, comp, procs = cfg.lms_altitude_km, cfg.lms_bandwidth_hz, cfg.lms_compute, cfg.lms_processors
        comm, price, radius = cfg.lms_comm_price, cfg.lms_compute_price, cfg.lms_footprint_km
    else:
        alt, bw, comp, procs = (
            cfg.cubesat_altitude_km, cfg.cubesat_bandwidth_hz, cfg.cubesat_compute, cfg.cubesat_processors,
        )
        comm, price, radius = cfg.cubesat_comm_price, cfg.cubesat_compute_price, cfg.cubesat_footprint_km
    return Satellite(
        id=sid,
        layer=layer,
        altitude_km=alt,
        bandwidth_hz=bw,
        compute_per_processor=comp,
        processor_count=procs,
        comm_unit_price=comm,
        compute_unit_price=price,
        footprint_radius_km=radius,
        heading_rad=float(rng.uniform(0.0, 2.0 * math.pi)),
        offset_km=float(rng.uniform(-side / 2, side / 2)),
        closest_approach_s=float(rng.uniform(0.0, cfg.horizon_slots * cfg.slot_s)),
    )


def generate_scenario(config: ScenarioConfig, seed: int) -> Scenario:
    """Draw a random scenario. Identical ``(config, seed)`` give identical scenarios."""
    config.validate()
    seed = _check_seed(seed)
    rng = np.random.default_rng(seed)
    side = config.region_side_km

    n_cte = config.n_cte
    if config.cte_count_mode == "poisson":
        density = config.n_cte / config.region_area_km2
        n_cte = int(rng.poisson(density * config.region_area_km2))
    xy = rng.uniform(0.0, side, size=(n_cte, 2))

    satellites: list[Satellite] = []
    for _ in range(config.n_cns):
        satellites.append(
            Satellite(
                id=len(satellites),
                layer=SatelliteLayer.CNS,
                altitude_km=config.cns_altitude_km,
                bandwidth_hz=config.cns_bandwidth_hz,
                compute_per_processor=config.cns_compute,
                processor_count=config.cns_processors,
                comm_unit_price=config.cns_comm_price,
                compute_unit_price=config.cns_compute_price,
                footprint_radius_km=math.inf,
                stationary=True,
            )
        )
    for _ in range(config.n_lms):
        satellites.append(_moving_satellite(rng, len(satellites), SatelliteLayer.LMS, config))
    first_cube = len(satellites)
    for _ in range(config.n_cubesat):
        satellites.append(_moving_satellite(rng, len(satellites), SatelliteLayer.CUBESAT, config))

    need = config.min_cubesats_per_cte
    if n_cte and need > 0:
        if config.n_cubesat < need:
            raise ScenarioGenerationError(
                f"{config.n_cubesat} CubeSats cannot give every CTE {need} CubeSats in range"
            )
        for attempt in range(config.max_generation_retries + 1):
            counts = _cubesats_in_range(satellites[first_cube:], xy, config)
            short = counts < need
            if not short.any():
                break
            if attempt == config.max_generation_retries:
                raise ScenarioGenerationError(
                    f"{int(short.sum())} CTEs have fewer than {need} CubeSats in range "
                    f"after {config.max_generation_retries} retries"
                )
            for i in range(first_cube, len(satellites)):
                satellites[i] = _moving_satellite(rng, i, SatelliteLayer.CUBESAT, config)

    tasks: list[Task] = []
    owned = np.zeros(n_cte)
    if n_cte:
        m_lo, m_hi = config.memory_range_mb
        c_lo, c_hi = config.compute_range_gcycles
        k = config.subtasks_per_task
        sid = 0
        for tid in range(config.n_tasks):
            u = rng.uniform(size=k)
            owners = rng.choice(n_cte, size=k, replace=n_cte < k)
            subs = []
            for j in range(k):
                # compute demand is the memory quantile mapped onto the compute range,
                # so both marginals are uniform and demand grows with memory
                mem = m_lo + u[j] * (m_hi - m_lo)
                cyc = c_lo + u[j] * (c_hi - c_lo)
                subs.append(SubTask(sid, tid, int(owners[j]), float(mem), float(cyc)))
                owned[owners[j]] += mem
                sid += 1
            tasks.append(Task(tid, tuple(subs)))

    ctes = tuple(
        CTE(
            id=i,
            x_km=float(xy[i, 0]),
            y_km=float(xy[i, 1]),
            cached_memory_mb=float(owned[i]),
            transmit_power_mw=config.cte_power_mw,
            channel_gain_db=config.channel_gain_db,
        )
        for i in range(n_cte)
    )
    return Scenario(config, seed, tuple(satellites), ctes, tuple(tasks))


def _cubesats_in_range(cubes: list[Satellite], xy: np.ndarray, cfg: ScenarioConfig) -> np.ndarray:
    counts = np.zeros(len(xy), dtype=int)
    horizon_s = cfg.horizon_slots * cfg.slot_s
    for sat in cubes:
        for cte in range(len(xy)):
            if _pass_intervals(sat, xy[cte], cfg.region_side_km, horizon_s):
                counts[cte] += 1
    return counts


# ---------------------------------------------------------------------------
# coverage


def _pass_intervals(
    sat: Satellite, xy: np.ndarray, side_km: float, horizon_s: float
) -> list[tuple[float, float, float]]:
    """Continuous intervals ``(t_in, t_out, pass_duration)`` overlapping ``[0, horizon_s)``."""
    centre = np.array([side_km / 2, side_km / 2])
    rel = np.asarray(xy, dtype=float) - centre
    r = sat.footprint_radius_km
    if sat.stationary:
        # parked over the region centre
        if math.isinf(r) or float(np.hypot(*rel)) <= r:
            return [(-math.inf, math.inf, math.inf)]
        return []
    along = rel[0] * math.cos(sat.heading_rad) + rel[1] * math.sin(sat.heading_rad)
    cross = -rel[0] * math.sin(sat.heading_rad) + rel[1] * math.cos(sat.heading_rad)
    d = cross - sat.offset_km
    if abs(d) > r:
        return []
    half = math.sqrt(r * r - d * d)
    v = sat.ground_speed_km_s
    period = sat.period_s
    duration = 2 * half / v
    t0 = sat.closest_approach_s + (along - half) / v
    k_lo = math.floor((0.0 - t0 - duration) / period)
    k_hi = math.ceil((horizon_s - t0) / period)
    out = []
    for k in range(k_lo, k_hi + 1):
        t_in = t0 + k * period
        t_out = t_in + duration
        if t_out >= 0.0 and t_in < horizon_s:
            out.append((t_in, t_out, duration))
    return out


def coverage_windows(scenario: Scenario, horizon_slots: int | None = None) -> list[CoverageWindow]:
    """Slot windows in which each CTE lies inside each satellite's moving footprint.

    A CTE is served in slot ``n`` when it is covered at the slot start ``n * slot_s``.
    Windows are clipped to ``[0, horizon_slots)``; ``pass_s`` keeps the untruncated
    pass duration.
    """
    horizon = scenario.horizon_slots if horizon_slots is None else int(horizon_slots)
    if horizon < 1:
        raise ValueError("horizon_slots must be >= 1")
    dt = scenario.config.slot_s
    side = scenario.config.region_side_km
    out: list[CoverageWindow] = []
    for sat in scenario.satellites:
        for cte in scenario.ctes:
            xy = np.array([cte.x_km, cte.y_km])
            for t_in, t_out, dur in _pass_intervals(sat, xy, side, horizon * dt):
                start = 0 if math.isinf(t_in) else max(0, math.ceil(t_in / dt - 1e-9))
                end = horizon if math.isinf(t_out) else min(horizon, math.floor(t_out / dt + 1e-9) + 1)
                if end > start:
                    out.append(CoverageWindow(sat.id, cte.id, start, end, (end - start) * dt, dur))
    out.sort(key=lambda w: (w.satellite, w.cte, w.start_slot))
    return out


def with_config(scenario: Scenario, **changes: Any) -> Scenario:
    """Copy of ``scenario`` with config fields replaced (entities untouched)."""
    return replace(scenario, config=replace(scenario.config, **changes))


def iter_seeds(base_seed: int, n: int) -> Iterable[int]:
    """Independent 64-bit child seeds derived from ``base_seed``."""
    ss = np.random.SeedSequence(_check_seed(base_seed))
    for child in ss.spawn(n):
        yield int(child.generate_state(1, dtype=np.uint64)[0])
