"""Shared pytest wiring for the acceptance report.

Acceptance tests register a one-line verdict per criterion through
record_criterion; the terminal-summary hook prints those lines after the
run so they are visible even with output capture enabled.
"""

_CRITERION_LINES = {}


def record_criterion(number, verdict, detail):
    _CRITERION_LINES[number] = f"criterion {number}: {verdict} - {detail}"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERION_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERION_LINES):
        terminalreporter.write_line(_CRITERION_LINES[number])
