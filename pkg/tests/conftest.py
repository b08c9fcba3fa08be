import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(scope="session")
def cusp_grids():
    """Banded grids around the lifted cusp, built on first use per h."""
    from blowup_cpm.cpm_solver import cusp_band

    cache = {}

    def get(h):
        if h not in cache:
            cache[h] = cusp_band(h)
        return cache[h]

    return get


@pytest.fixture(scope="session")
def demo_grid():
    from blowup_cpm.surface5d import surface_band

    return surface_band()


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
