import time

import pytest

from smoothcover.pipeline import run_pipeline
from smoothcover.scenario import load_scenario

from _support import DEMO


class DemoRun:
    def __init__(self, out_dir):
        self.out = out_dir
        self.scenario = load_scenario(DEMO)
        t0 = time.perf_counter()
        self.report = run_pipeline(self.scenario, out_dir)
        self.wall = time.perf_counter() - t0


@pytest.fixture(scope="session")
def demo_run(tmp_path_factory):
    """The shipped demo, planned and flown once per session."""
    return DemoRun(tmp_path_factory.mktemp("demo_a"))


@pytest.fixture(scope="session")
def demo_rerun(tmp_path_factory, demo_run):
    return DemoRun(tmp_path_factory.mktemp("demo_b"))


# -- acceptance reporting -------------------------------------------------------

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, text = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _ACCEPTANCE[number] = (text, "PASS" if rep.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        text, status = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {text}")
