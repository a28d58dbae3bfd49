"""Collects one verdict line per acceptance criterion and prints them at the end of the run."""

import pytest

VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict():
    """``verdict(n, ok, detail)`` records criterion ``n`` and returns ``ok``."""

    def record(number: int, ok: bool, detail: str) -> bool:
        VERDICTS[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance")
    for number in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[number])
