import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from _problems import toy_problem  # noqa: E402


@pytest.fixture(scope="session")
def toy():
    return toy_problem()


@pytest.fixture(scope="session")
def toy_larger():
    """5 vertices per side, 6 time elements: big enough for POD/greedy checks."""
    return toy_problem(vertices_per_side=5, blocks=2, time_elements=6)


_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, text = marker.args
    failed = report.failed
    if report.when == "call" or failed:
        prev = _CRITERIA.get(number, (text, True))[1]
        _CRITERIA[number] = (text, prev and not failed)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        text, ok = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {text}")
