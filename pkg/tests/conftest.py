"""Shared fixtures: corpus access, a live agent server, acceptance report."""

from __future__ import annotations

import socket
import threading
import time
from pathlib import Path

import pytest

CORPUS_DIR = Path(__file__).parent / "corpus"

EMAIL_PREFIX = "email_"


def read_corpus_file(path: Path) -> str:
    # newline translation must not touch corpus bytes (CRLF files).
    return path.read_bytes().decode("utf-8")


def corpus_profile(path: Path) -> str:
    return "email" if path.name.startswith(EMAIL_PREFIX) else "document"


def corpus_documents() -> list[tuple[str, str, str]]:
    """(name, profile, text) for every committed corpus document."""
    docs = []
    for path in sorted(CORPUS_DIR.iterdir()):
        if path.is_file():
            docs.append((path.name, corpus_profile(path), read_corpus_file(path)))
    return docs


@pytest.fixture(scope="session")
def corpus() -> list[tuple[str, str, str]]:
    return corpus_documents()


@pytest.fixture()
def golden_markdown() -> str:
    return read_corpus_file(CORPUS_DIR / "golden_mixed.md")


@pytest.fixture()
def email_fixture() -> str:
    return read_corpus_file(CORPUS_DIR / "email_project_update.txt")


# --- live agent server --------------------------------------------------------


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


class AgentServer:
    """Runs the decomposition agent on a real socket in a daemon thread."""

    def __init__(self, port: int | None = None):
        self.port = port or free_port()
        self.url = f"http://127.0.0.1:{self.port}"
        self._server = None
        self._thread = None

    def start(self, timeout: float = 10.0) -> "AgentServer":
        import uvicorn

        from maod.a2a import create_agent_app

        config = uvicorn.Config(
            create_agent_app(), host="127.0.0.1", port=self.port, log_level="error"
        )
        self._server = uvicorn.Server(config)
        self._thread = threading.Thread(target=self._server.run, daemon=True)
        self._thread.start()
        deadline = time.time() + timeout
        while not self._server.started:
            if time.time() > deadline or not self._thread.is_alive():
                raise RuntimeError(f"agent server failed to start on port {self.port}")
            time.sleep(0.01)
        return self

    def stop(self, timeout: float = 10.0) -> None:
        if self._server is not None:
            self._server.should_exit = True
            self._thread.join(timeout=timeout)
            self._server = None
            self._thread = None


@pytest.fixture(scope="session")
def agent_server():
    server = AgentServer().start()
    yield server
    server.stop()


# --- acceptance reporting -----------------------------------------------------

_acceptance_results: list[tuple[str, str]] = []


def record_acceptance(report) -> None:
    title = report.nodeid.split("::")[-1]
    _acceptance_results.append((title, report.outcome.upper()))


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        record_acceptance(report)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for title, outcome in _acceptance_results:
        mark = "PASS" if outcome == "PASSED" else outcome
        terminalreporter.write_line(f"{mark}: {title}")
