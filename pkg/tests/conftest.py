"""Shared pytest plumbing.

Collects the acceptance-gate result lines so they are echoed in the
terminal summary even when every test passes (per-test stdout is
captured by pytest and normally hidden for passing tests).
"""

ACCEPTANCE_LINES = []


def record_acceptance(line):
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance gate")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
