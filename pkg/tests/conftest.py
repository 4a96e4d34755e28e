import functools

import pytest

from axe import fixtures
from axe.pipeline import resolve_config, run_analysis


@functools.lru_cache(maxsize=None)
def analyzed(name: str):
    fx = fixtures.ALL[name]()
    desc = fx.descriptor()
    return fx, run_analysis(desc, resolve_config(desc))


@pytest.fixture
def run_fixture():
    return analyzed


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("fixtures")
    fixtures.write_all(out)
    return out


SUITE_BUDGET_SECS = 120
_started = []


def pytest_sessionstart(session):
    import time

    _started.append(time.perf_counter())


def pytest_terminal_summary(terminalreporter):
    import sys
    import time

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    elapsed = time.perf_counter() - _started[0]
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
    verdict = "PASS" if elapsed < SUITE_BUDGET_SECS else "FAIL"
    terminalreporter.write_line(f"criterion 9 (suite time): {verdict} - {elapsed:.1f}s < {SUITE_BUDGET_SECS}s")
