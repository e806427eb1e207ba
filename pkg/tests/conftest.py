import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from minimax_iv.scenario import random_spectral_spec, scenario_from_config, spectral_scenario

settings.register_profile("repo", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def w1():
    return scenario_from_config({"fixture": "W1"})


@pytest.fixture
def w2():
    return scenario_from_config({"fixture": "W2"})


@pytest.fixture
def default_scenario():
    return scenario_from_config({"fixture": "default"})


def random_scenarios(count, seed=0):
    rng = np.random.default_rng(seed)
    return [spectral_scenario(random_spectral_spec(rng), f"r{i}") for i in range(count)]


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
