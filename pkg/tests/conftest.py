"""Shared pytest hooks: the acceptance suite's one-line-per-criterion report."""
import pytest

ACCEPTANCE_LINES: dict[int, str] = {}


def record(number: int, title: str, status: str, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"[{status}] criterion {number:2d}: {title}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])


@pytest.fixture
def criterion():
    """``criterion(n, title, ok, detail)`` records the line, then asserts ``ok``."""

    def check(number, title, ok, detail):
        record(number, title, "PASS" if ok else "FAIL", detail)
        print(ACCEPTANCE_LINES[number])
        assert ok, ACCEPTANCE_LINES[number]

    return check
