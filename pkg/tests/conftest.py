import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA = {}


@pytest.fixture
def record_criterion():
    """Store one verdict line per acceptance criterion for the terminal summary."""

    def record(number, ok, detail):
        _CRITERIA[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(_CRITERIA[number])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[number])


@pytest.fixture
def example1():
    from rmabg.instances import example1_instance
    return example1_instance()


@pytest.fixture
def example1_identity():
    from rmabg.instances import example1_instance
    return example1_instance("identity")
