import pytest

from spiked_ldp import rates

_criterion_lines: list[str] = []


@pytest.fixture
def criterion_log():
    """Record a one-line PASS/FAIL verdict; echoed again in the terminal summary."""
    def log(line: str):
        print(line)
        _criterion_lines.append(line)
    return log


@pytest.fixture(autouse=True)
def _fresh_faults():
    yield
    rates._faults.clear()


def pytest_terminal_summary(terminalreporter):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in _criterion_lines:
            terminalreporter.write_line(line)
