import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from holder_bounds.instances import builtin_instance

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def instances():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = builtin_instance(name)
        return cache[name]
    return get


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
