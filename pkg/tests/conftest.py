import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sicnn import config  # noqa: E402

ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def ex6():
    return config.build(config.example6_config())


@pytest.fixture(scope="session")
def ex6_traj(ex6):
    from sicnn import solve_ivp

    return solve_ivp(ex6.net, ex6.schedule, ex6.act, ex6.setup, 20.0, ex6.opts)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
