import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nptorus.geometry import TorusShape  # noqa: E402

_CRITERIA = {}


@pytest.fixture(scope="session")
def shape05():
    return TorusShape(0.5)


@pytest.fixture
def report():
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    def _report(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _CRITERIA[number] = line
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
