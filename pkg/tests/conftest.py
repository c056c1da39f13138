import pytest

from symplug.core import PlugParams


@pytest.fixture(scope="session")
def p():
    return PlugParams()


@pytest.fixture(scope="session")
def trapped_entry(p):
    from symplug.verifier import find_trapped_entry

    return find_trapped_entry(p)


ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    """Print and keep one PASS/FAIL line per acceptance criterion."""

    def rec(number, title, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title} -- {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed

    return rec


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
