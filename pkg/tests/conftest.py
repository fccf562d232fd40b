import os

import pytest
from hypothesis import HealthCheck, settings

from shallowlake.dynamics import ModelParams, make_lake_dynamics, make_linear_dynamics
from shallowlake.localization import maximizing_bounds

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

#: (criterion number, passed, detail) rows filled in by test_acceptance.py
ACCEPTANCE_LINES: list[tuple[int, bool, str]] = []


@pytest.fixture(scope="session")
def lake():
    return ModelParams(make_lake_dynamics(1.0), rho=0.03, c=1.0, x0=1.0)


@pytest.fixture(scope="session")
def linear():
    return ModelParams(make_linear_dynamics(1.0), rho=0.03, c=1.0, x0=0.5)


@pytest.fixture(scope="session")
def lake_bounds(lake):
    return maximizing_bounds(lake)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
