import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=200)
settings.load_profile("default")

_VERDICTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")
    config.stash[_VERDICTS] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def builtin_results():
    """Memoised ``run_scenario(builtin(name))`` shared across test files."""
    from rotospec.harness import builtin, run_scenario
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = run_scenario(builtin(name))
        return cache[name]
    return get


@pytest.fixture
def measured(request):
    """Dict a criterion test fills with the figures shown on its verdict line."""
    request.node.measured = {}
    return request.node.measured


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    number, title = marker.args
    entry = item.config.stash[_VERDICTS].setdefault(number, {"title": title, "ok": True,
                                                             "notes": []})
    entry["ok"] = entry["ok"] and report.passed
    notes = ", ".join(f"{k} {v}" for k, v in getattr(item, "measured", {}).items())
    if notes and report.when == "call":
        entry["notes"].append(notes)


def pytest_terminal_summary(terminalreporter, config):
    verdicts = config.stash[_VERDICTS]
    if not verdicts:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(verdicts):
        v = verdicts[number]
        notes = "; ".join(v["notes"])
        terminalreporter.write_line(
            f"{'PASS' if v['ok'] else 'FAIL'}  criterion {number:2d}: {v['title']}"
            + (f" [{notes}]" if notes else ""))
