import os
from pathlib import Path

import pytest

# Identification datasets take minutes to collect; keep them between runs.
os.environ.setdefault("TRACKSIM_CACHE", str(Path(__file__).resolve().parents[1] / ".tracksim_cache"))

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def report():
    """Record the outcome line of an acceptance criterion."""

    def _report(number: int, passed: bool, detail: str) -> bool:
        ACCEPTANCE_LINES[number] = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {detail}"
        print(ACCEPTANCE_LINES[number])
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
