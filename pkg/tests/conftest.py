import pytest

from helpers import make_instance


@pytest.fixture
def line3():
    """Depot 0 and customers 1, 2 with 0->1:10, 1->2:5, 2->0:12."""
    day = [[0, 10, 12], [10, 0, 5], [12, 5, 0]]
    return make_instance(day)


CRITERIA: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> bool:
    """Store the one-line verdict printed at the end of the session."""
    CRITERIA[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(CRITERIA[number])
    return passed


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])
