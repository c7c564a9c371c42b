from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).parent / "data"

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def astronaut():
    from rfdn.data import load_image
    return load_image(DATA / "astronaut_128.png")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    num, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        prev = _criteria.get(num, (title, "PASS", 0.0))
        status = prev[1] if report.outcome == "passed" else "FAIL"
        _criteria[num] = (title, status, prev[2] + report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        title, status, secs = _criteria[num]
        terminalreporter.write_line(f"criterion {num}: {status:4s} {title} ({secs:.1f}s)")
