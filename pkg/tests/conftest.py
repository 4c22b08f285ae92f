"""Echo the acceptance lines in the terminal summary so they land in the log
even when output capture is on."""

LINES: list[str] = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        for line in report.capstdout.splitlines():
            if line.startswith("[PASS]") or line.startswith("[FAIL]"):
                LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
