"""Shared fixtures.

The ``criterion`` fixture collects one (number, description, ok, detail)
record per acceptance test; a terminal-summary hook prints one PASS/FAIL
line per criterion at the end of the run, so the verdicts are visible even
with output capture on.
"""

from __future__ import annotations

import pytest

_CRITERIA: list[tuple[int, str, bool, str]] = []


@pytest.fixture
def criterion():
    """Record an acceptance-criterion verdict; returns the recorder."""

    def _record(num: int, desc: str, ok: bool, detail: str = "") -> bool:
        _CRITERIA.append((num, desc, bool(ok), detail))
        return bool(ok)

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num, desc, ok, detail in sorted(_CRITERIA):
        verdict = "PASS" if ok else "FAIL"
        line = f"CRITERION {num:2d} {verdict} - {desc}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
