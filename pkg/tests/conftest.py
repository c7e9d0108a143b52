import re

import pytest

_ACCEPTANCE_NOTES = {}


@pytest.fixture(scope="session")
def acceptance_log():
    """Collect a one-line note per acceptance criterion for the summary."""

    def note(criterion: int, text: str):
        _ACCEPTANCE_NOTES[int(criterion)] = text

    return note


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = {}
    for outcome, label in (("passed", "PASS"), ("failed", "FAIL"),
                           ("error", "FAIL")):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", nodeid)
            if m is None:
                continue
            k = int(m.group(1))
            if rows.get(k) != "FAIL":
                rows[k] = label
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(rows):
        note = _ACCEPTANCE_NOTES.get(k, "")
        suffix = f"  {note}" if note else ""
        terminalreporter.write_line(f"criterion {k:02d}: {rows[k]}{suffix}")
