import numpy as np
import pytest

from idyll.fields import sin_profile
from idyll.rayleigh import Shooter

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def sin128():
    return sin_profile(128)


@pytest.fixture(scope="session")
def sin_shooter(sin128):
    return Shooter(sin128)


@pytest.fixture(scope="session")
def galerkin_system(sin128):
    from idyll.galerkin import galerkin_reduce

    return galerkin_reduce(sin128, 0.8, 16)


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion; printed in the terminal summary."""

    def add(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)
