"""Collects one status line per acceptance criterion and prints them at the end."""

import pytest

_LINES = {}


@pytest.fixture
def criterion(request):
    """Call ``criterion(n, ok, detail)`` once per acceptance criterion."""

    def record(number, ok, detail):
        _LINES[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_LINES):
        terminalreporter.write_line(_LINES[n])
