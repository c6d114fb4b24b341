import pytest

from countscale.core import DEFAULT_POOL


@pytest.fixture
def pool():
    return DEFAULT_POOL


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
