"""Transmission and computation time/price of a sub-task on one server.

Unit conventions: memory in MB (8e6 bit each), bandwidth in Hz, compute in
Gigacycles and Gigacycles/s. Communication price is ``chi_tran * y * zeta`` with
``zeta`` expressed in MHz; the per-layer ``chi_tran`` constants are quoted per MB
in the source tables, so the product is a price index rather than a true
per-volume charge.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .model import CTE, Satellite, SatelliteLayer, SubTask

BITS_PER_MB = 8e6
HZ_PER_MHZ = 1e6


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def mb_to_bits(mb: float) -> float:
    return mb * BITS_PER_MB


def bits_to_mb(bits: float) -> float:
    return bits / BITS_PER_MB


@dataclass(frozen=True)
class LinkParams:
    bandwidth_hz: float
    tx_power_mw: float
    gain_linear: float
    noise_mw: float

    def __post_init__(self) -> None:
        for name in ("bandwidth_hz", "tx_power_mw", "gain_linear", "noise_mw"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not self.spectral_efficiency > 0:
            raise ValueError("spectral efficiency must be positive")

    @property
    def snr(self) -> float:
        return self.tx_power_mw * self.gain_linear / self.noise_mw

    @property
    def spectral_efficiency(self) -> float:
        """bit/s/Hz"""
        return math.log2(1.0 + self.snr)

    @classmethod
    def between(cls, cte: CTE, sat: Satellite, noise_mw: float) -> "LinkParams":
        return cls(sat.bandwidth_hz, cte.transmit_power_mw, db_to_linear(cte.channel_gain_db), noise_mw)


@dataclass(frozen=True)
class ServiceOutcome:
    t_tran_s: float
    t_comp_s: float
    p_tran: float
    p_comp: float

    @property
    def t_ser_s(self) -> float:
        return self.t_tran_s + self.t_comp_s

    @property
    def p_ser(self) -> float:
        return self.p_tran + self.p_comp


def transmission_time(subtask: SubTask, link: LinkParams, y_fraction: float) -> float:
    if not 0.0 < y_fraction <= 1.0:
        raise ValueError(f"bandwidth fraction must lie in (0, 1], got {y_fraction}")
    rate = y_fraction * link.bandwidth_hz * link.spectral_efficiency  # bit/s
    return mb_to_bits(subtask.memory_mb) / rate


def transmission_price(satellite: Satellite, y_fraction: float) -> float:
    if not 0.0 <= y_fraction <= 1.0:
        raise ValueError(f"bandwidth fraction must lie in [0, 1], got {y_fraction}")
    return satellite.comm_unit_price * y_fraction * satellite.bandwidth_hz / HZ_PER_MHZ


def computation_time(subtask: SubTask, satellite: Satellite, beta_share: float) -> float:
    if not beta_share > 0:
        raise ValueError(f"compute share must be positive, got {beta_share}")
    return subtask.compute_gigacycles / (beta_share * satellite.compute_per_processor)


def computation_price(satellite: Satellite, beta_share: float) -> float:
    if beta_share < 0:
        raise ValueError(f"compute share must be non-negative, got {beta_share}")
    return satellite.compute_unit_price * beta_share * satellite.compute_per_processor


def cns_computation_time(subtask: SubTask, omega: float) -> float:
    if not omega > 0:
        raise ValueError(f"CNS compute power must be positive, got {omega}")
    return subtask.compute_gigacycles / omega


def cns_computation_price(satellite: Satellite, omega: float) -> float:
    if omega < 0:
        raise ValueError(f"CNS compute power must be non-negative, got {omega}")
    return satellite.compute_unit_price * omega


def service_outcome(
    subtask: SubTask, satellite: Satellite, link: LinkParams, y: float, beta_or_omega: float
) -> ServiceOutcome:
    """Compose transmission and computation terms.

    For a CNS server ``beta_or_omega`` is the dedicated compute power (Gigacycles/s);
    for LMS and CubeSat servers it is the share of the per-processor rate.
    An empty sub-task (no data, no cycles) costs nothing.
    """
    if subtask.memory_mb == 0 and subtask.compute_gigacycles == 0:
        return ServiceOutcome(0.0, 0.0, 0.0, 0.0)
    t_tran = transmission_time(subtask, link, y)
    p_tran = transmission_price(satellite, y)
    if satellite.layer is SatelliteLayer.CNS:
        t_comp = cns_computation_time(subtask, beta_or_omega)
        p_comp = cns_computation_price(satellite, beta_or_omega)
    else:
        t_comp = computation_time(subtask, satellite, beta_or_omega)
        p_comp = computation_price(satellite, beta_or_omega)
    return ServiceOutcome(t_tran, t_comp, p_tran, p_comp)


def meets_deadline(outcome: ServiceOutcome, t_max_s: float) -> bool:
    return outcome.t_ser_s <= t_max_s
