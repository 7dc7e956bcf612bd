import pytest

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def criterion_log():
    """Record one summary line per acceptance criterion, printed at the end of the run."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
