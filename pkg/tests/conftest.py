import pytest


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def report(request):
    """Record one pass/fail line for the acceptance summary."""
    lines = request.config._acceptance_lines

    def _report(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
        lines.append(line)
        print(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
