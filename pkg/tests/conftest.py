"""Shared test plumbing.

The acceptance tests register one summary line per criterion; the hook below
prints them after the normal pytest summary so the pass/fail ledger is visible
in plain `pytest -v` output (captured stdout of passing tests is not).
"""

_ACCEPTANCE_LINES = []


def record_acceptance(line):
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
