import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from satattack.keyrate import system_at_distance  # noqa: E402
from satattack.units import REFERENCE_PROFILE  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def profile():
    return REFERENCE_PROFILE


@pytest.fixture(scope="session")
def link25():
    """Reference profile with V_A from the SNR schedule at 25 km, plus the channel."""
    return system_at_distance(REFERENCE_PROFILE, 25.0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(".")[0].split()[-1])):
            terminalreporter.write_line(line)
