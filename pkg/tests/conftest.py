import os

import pytest
from hypothesis import HealthCheck, settings

from diffnet import CellSpec, DomainSpec, SystemSpec
from diffnet.kinetics import REFERENCE_PARAMS

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def two_cell_spec(L=20.0, D=2e4, **kw):
    P = REFERENCE_PARAMS
    cells = (CellSpec((0, 0, 0), "sender"), CellSpec((15, 0, 0), "receiver"))
    return SystemSpec(DomainSpec(L, D), cells, P["signal"], P["sender"], P["receiver"], **kw)


@pytest.fixture(scope="session")
def two_cell():
    return two_cell_spec()


@pytest.fixture(scope="session")
def two_cell_runs(two_cell):
    """Full and reduced trajectories of the two-cell system over 1000 min (shared; ~15 s)."""
    from diffnet import simulate_full, simulate_reduced

    return simulate_full(two_cell, t_end=1000.0), simulate_reduced(two_cell, 1000.0)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
