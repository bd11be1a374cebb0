"""Fixtures: the app under test and a live server."""

from __future__ import annotations

import threading
import time

import pytest
import uvicorn
from fastapi.testclient import TestClient

from scorer_service.app import create_app
from scorer_service.config import ServiceConfig


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
    terminalreporter.section("acceptance criteria (scoring service)")
    for criterion in sorted(_ACCEPTANCE):
        verdict, title = _ACCEPTANCE[criterion]
        terminalreporter.write_line(f"criterion {criterion:>2}: {verdict}  {title}")


@pytest.fixture(scope="session")
def app():
    return create_app(ServiceConfig())


@pytest.fixture(scope="session")
def client(app):
    with TestClient(app) as c:
        yield c


@pytest.fixture(scope="session")
def live_endpoint(app):
    """The same app behind a real socket, for driving real HTTP clients."""
    server = uvicorn.Server(
        uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning")
    )
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10.0
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("service did not start")
        time.sleep(0.02)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5.0)
