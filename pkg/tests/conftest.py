import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE: dict[int, dict] = {}


@pytest.fixture
def criterion():
    """Record the outcome of an acceptance criterion for the terminal summary."""

    def record(number: int, title: str, passed: bool, detail: str):
        _ACCEPTANCE[number] = {"title": title, "passed": bool(passed), "detail": detail}
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        row = _ACCEPTANCE[number]
        verdict = "PASS" if row["passed"] else "FAIL"
        terminalreporter.write_line(f"{verdict} criterion {number}: {row['title']} | {row['detail']}")
