"""Shared test plumbing.

``ACCEPTANCE`` collects (criterion, passed) pairs from the acceptance
suite; the terminal summary prints one line per criterion after the run.
"""

ACCEPTANCE: list[tuple[str, bool]] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for name, ok in ACCEPTANCE:
            terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}")
