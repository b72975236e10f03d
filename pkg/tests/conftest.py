import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from garchqr import GarchParams, InnovationLaw, simulate

settings.register_profile("default", deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def garch11_series():
    """GARCH(1,1) (0.4, 0.4, 0.4), normal innovations, n=1000."""
    return simulate(GarchParams(0.4, (0.4,), (0.4,)), InnovationLaw(), 1000, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_CRITERIA: dict = {}


@pytest.fixture(scope="session")
def criterion():
    """Record one acceptance line: ``criterion(number, passed, detail)``.
    ``passed`` may be ``None`` for skipped or informational outcomes."""
    def record(number, passed, detail):
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
        line = f"criterion {number}: {status}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
