import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion and assert it."""
    def report(number, name, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name}" + (f" ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
