import sys


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdicts at the end of the run, even when output is captured."""
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
