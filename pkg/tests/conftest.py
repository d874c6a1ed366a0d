import numpy as np
import pytest

from satoffload.env import EnvConfig, OffloadEnv
from satoffload.harness.config import toy_scenario
from satoffload.model import ScenarioConfig, generate_scenario


@pytest.fixture(scope="session")
def toy_config() -> ScenarioConfig:
    return toy_scenario()


@pytest.fixture(scope="session")
def toy_scenario_obj(toy_config):
    return generate_scenario(toy_config, 11)


@pytest.fixture
def toy_env(toy_scenario_obj):
    return OffloadEnv(toy_scenario_obj, EnvConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
