import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from satoffload.channel import (
    LinkParams,
    ServiceOutcome,
    bits_to_mb,
    computation_price,
    computation_time,
    db_to_linear,
    mb_to_bits,
    meets_deadline,
    service_outcome,
    transmission_price,
    transmission_time,
)
from satoffload.model import Satellite, SatelliteLayer, SubTask


def sat(layer=SatelliteLayer.LMS, bw=200e6, omega=80.0, chi_t=0.12e-4, chi_c=0.3, procs=1.0):
    return Satellite(0, layer, 1000.0, bw, omega, procs, chi_t, chi_c, 400.0)


def sub(mem=10.0, nu=40.0):
    return SubTask(0, 0, 0, mem, nu)


LINK = LinkParams(200e6, 150.0, db_to_linear(5.0), 1e-5)


def test_transmission_time_reference():
    # 8e7 bits / (2e8 Hz * log2(1 + 150 * 10**0.5 / 1e-5)), evaluated by hand
    assert transmission_time(sub(10), LINK, 1.0) == pytest.approx(0.0157, rel=1e-3)


def test_transmission_time_halving_y():
    assert transmission_time(sub(), LINK, 0.25) == pytest.approx(2 * transmission_time(sub(), LINK, 0.5), rel=1e-15)


def test_transmission_zero_memory():
    assert transmission_time(sub(0.0), LINK, 1.0) == 0.0


@pytest.mark.parametrize("y", [0.0, -0.1, 1.5])
def test_transmission_time_domain(y):
    with pytest.raises(ValueError):
        transmission_time(sub(), LINK, y)


def test_transmission_price():
    s = sat()
    assert transmission_price(s, 0.0) == 0.0
    assert transmission_price(s, 0.4) == pytest.approx(2 * transmission_price(s, 0.2), rel=1e-15)
    cns = sat(SatelliteLayer.CNS, chi_t=0.30e-4)
    cube = sat(SatelliteLayer.CUBESAT, chi_t=0.08e-4)
    assert transmission_price(cns, 0.5) > transmission_price(cube, 0.5)


def test_computation_time():
    assert computation_time(sub(nu=40), sat(omega=80), 0.5) == pytest.approx(1.0)
    assert computation_time(sub(nu=7), sat(omega=7), 1.0) == pytest.approx(1.0)
    assert computation_time(sub(), sat(), 0.2) == pytest.approx(2 * computation_time(sub(), sat(), 0.4))
    with pytest.raises(ValueError):
        computation_time(sub(), sat(), 0.0)


def test_computation_price():
    cube = sat(SatelliteLayer.CUBESAT, omega=10, chi_c=0.08)
    assert computation_price(cube, 0.0) == 0.0
    assert computation_price(cube, 0.5) == pytest.approx(0.4)
    lms = sat(SatelliteLayer.LMS, omega=10, chi_c=0.3)
    assert computation_price(lms, 0.5) >= computation_price(cube, 0.5)


def test_service_outcome_sums():
    o = service_outcome(sub(), sat(), LINK, 0.5, 0.5)
    assert o.t_ser_s == o.t_tran_s + o.t_comp_s
    assert o.p_ser == o.p_tran + o.p_comp
    assert service_outcome(sub(0.0, 0.0), sat(), LINK, 0.5, 0.5) == ServiceOutcome(0.0, 0.0, 0.0, 0.0)


def test_service_outcome_cns_uses_power():
    cns = sat(SatelliteLayer.CNS, bw=1e9, omega=500, chi_t=0.3e-4, chi_c=10.0)
    o = service_outcome(sub(nu=40), cns, LINK, 1.0, 2.0)
    assert o.t_comp_s == pytest.approx(20.0)
    assert o.p_comp == pytest.approx(20.0)


def test_deadline():
    o = ServiceOutcome(1.0, 2.0, 0.0, 0.0)
    assert meets_deadline(o, 3.0)
    assert not meets_deadline(o, 2.999)


def test_link_validation():
    with pytest.raises(ValueError):
        LinkParams(0.0, 150.0, 1.0, 1e-5)


@given(st.floats(min_value=1e-6, max_value=1e6))
def test_unit_round_trip(mb):
    assert bits_to_mb(mb_to_bits(mb)) == pytest.approx(mb, rel=1e-12)


@given(st.floats(min_value=0.01, max_value=0.99), st.floats(min_value=0.001, max_value=0.009))
def test_monotonicity(y, dy):
    s, x = sat(), sub()
    assert transmission_time(x, LINK, y + dy) < transmission_time(x, LINK, y)
    assert computation_time(x, s, y + dy) < computation_time(x, s, y)
    assert transmission_price(s, y + dy) > transmission_price(s, y)
    assert computation_price(s, y + dy) > computation_price(s, y)


def test_db_conversion():
    assert db_to_linear(10.0) == pytest.approx(10.0)
    assert db_to_linear(5.0) == pytest.approx(math.sqrt(10.0))
