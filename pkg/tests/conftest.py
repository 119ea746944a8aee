"""Shared pytest plumbing: surface acceptance verdicts past output capture."""

ACCEPTANCE_VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance summary")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)
