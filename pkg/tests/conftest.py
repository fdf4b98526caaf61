import numpy as np
import pytest

from ddimedit.oracle import GaussianWorld, make_oracle, standard_world
from ddimedit.schedule import build_linear_schedule


@pytest.fixture(scope="session")
def schedule():
    return build_linear_schedule(1000, 1e-4, 0.02)


@pytest.fixture(scope="session")
def gmm_world():
    return standard_world()


@pytest.fixture(scope="session")
def gaussian_world():
    return GaussianWorld([0.5, -1.0], 1.0)


@pytest.fixture(scope="session")
def gmm_oracle(gmm_world, schedule):
    return make_oracle(gmm_world, schedule)


@pytest.fixture(scope="session")
def gaussian_oracle(gaussian_world, schedule):
    return make_oracle(gaussian_world, schedule)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, label): acceptance criterion")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when == "teardown":
        return
    if report.when == "setup" and report.passed:
        return
    number, label = marker.args
    results = item.config._criteria
    ok = results.get(number, (label, True))[1] and report.passed
    results[number] = (label, ok)


def pytest_terminal_summary(terminalreporter, config):
    results = config._criteria
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        label, ok = results[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {number}: {label}")
