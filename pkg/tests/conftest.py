import pytest


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion; printed in the summary."""
    lines = request.config.acceptance_lines

    def record(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        lines.append(line)
        print(line, flush=True)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    if config.acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in config.acceptance_lines:
            terminalreporter.write_line(line)
