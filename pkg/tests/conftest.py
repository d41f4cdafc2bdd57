"""Shared pytest wiring.

The acceptance tests record one summary line per criterion on the pytest
config object; the hook below prints them as a dedicated section after
the run, where output capture no longer swallows them.
"""


def pytest_configure(config):
    config._criterion_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criterion_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
