"""Shared fixtures: synthetic corpora, sidecars, and the mock scorer."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mock_scorer import start_server  # noqa: E402
from synthdata import build_corpus, make_realistic_store  # noqa: E402

from instructmine.corpus import Corpus  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(criterion, title): acceptance gate check"
    )


_ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    criterion = marker.kwargs.get("criterion", marker.args[0] if marker.args else 0)
    title = marker.kwargs.get("title", item.name)
    _ACCEPTANCE[int(criterion)] = ("PASS" if report.passed else "FAIL", title)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(_ACCEPTANCE):
        verdict, title = _ACCEPTANCE[criterion]
        terminalreporter.write_line(f"criterion {criterion:>2}: {verdict}  {title}")


@pytest.fixture(scope="session")
def mock_scorer():
    server, thread = start_server()
    yield server
    server.shutdown()


@pytest.fixture()
def tiny_corpus() -> Corpus:
    return build_corpus(12, seed=3, name="tiny")


@pytest.fixture(scope="session")
def realistic_store():
    return make_realistic_store()
