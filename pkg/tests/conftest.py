"""Collect the acceptance report lines and print them after the test run."""

ACCEPTANCE_KEY = "acceptance"
_LINES: list[str] = []


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    _LINES.extend(value for name, value in report.user_properties if name == ACCEPTANCE_KEY)


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)
