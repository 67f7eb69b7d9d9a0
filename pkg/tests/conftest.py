import numpy as np
import pytest

from nvgates.cli import resolve_config
from nvgates.scenarios import load_config

KHZ = 2 * np.pi * 1e3

# (criterion, verdict, detail) lines printed at the end of the session
ACCEPTANCE_LINES = []


def bundled(name):
    return load_config(resolve_config(name))


@pytest.fixture(scope="session")
def table1():
    return bundled("table1")


@pytest.fixture(scope="session")
def fig2b():
    return bundled("fig2b")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in sorted(ACCEPTANCE_LINES, key=lambda x: x[0]):
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}  {detail}")
