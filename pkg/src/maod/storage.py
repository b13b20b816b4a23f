"""Session persistence: append-only event logs plus snapshot checkpoints.

The reference backend keeps one directory per session holding an
``events.jsonl`` log (one manipulation event per line, never rewritten)
and numbered snapshot files. Restoring a session means loading the latest
snapshot and replaying the events recorded after it. A relational backend
can drop in behind the same interface.
"""

from __future__ import annotations

import json
import threading
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any

from .composer import ManipulationEvent, event_from_dict
from .errors import CorruptCheckpoint, ValidationError


class SessionStorage(ABC):
    """Storage contract: events are append-only; snapshots are immutable."""

    @abstractmethod
    def append_event(self, session_id: str, response_id: str, event: ManipulationEvent) -> None: ...

    @abstractmethod
    def read_events(self, session_id: str) -> list[tuple[str, ManipulationEvent]]: ...

    @abstractmethod
    def write_snapshot(self, session_id: str, sequence_no: int, payload: dict[str, Any]) -> None: ...

    @abstractmethod
    def read_latest_snapshot(self, session_id: str) -> tuple[int, dict[str, Any]] | None: ...

    @abstractmethod
    def list_sessions(self) -> list[str]: ...


class MemorySessionStorage(SessionStorage):
    """In-memory backend for tests and ephemeral servers."""

    def __init__(self):
        self._events: dict[str, list[tuple[str, ManipulationEvent]]] = {}
        self._snapshots: dict[str, list[tuple[int, str]]] = {}
        self._lock = threading.Lock()

    def append_event(self, session_id: str, response_id: str, event: ManipulationEvent) -> None:
        with self._lock:
            self._events.setdefault(session_id, []).append((response_id, event))

    def read_events(self, session_id: str) -> list[tuple[str, ManipulationEvent]]:
        with self._lock:
            return list(self._events.get(session_id, []))

    def write_snapshot(self, session_id: str, sequence_no: int, payload: dict[str, Any]) -> None:
        with self._lock:
            self._snapshots.setdefault(session_id, []).append((sequence_no, json.dumps(payload)))

    def read_latest_snapshot(self, session_id: str) -> tuple[int, dict[str, Any]] | None:
        with self._lock:
            snapshots = self._snapshots.get(session_id)
            if not snapshots:
                return None
            sequence_no, payload = max(snapshots, key=lambda item: item[0])
            return sequence_no, json.loads(payload)

    def list_sessions(self) -> list[str]:
        with self._lock:
            return sorted(set(self._events) | set(self._snapshots))


class FileSessionStorage(SessionStorage):
    """JSON-lines event log plus JSON snapshot files under a root directory.

    Layout: ``<root>/<session_id>/events.jsonl`` and
    ``<root>/<session_id>/snapshots/<sequence>.json``.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _session_dir(self, session_id: str) -> Path:
        if not session_id or "/" in session_id or session_id.startswith("."):
            raise ValidationError(f"invalid session id {session_id!r}")
        return self.root / session_id

    def append_event(self, session_id: str, response_id: str, event: ManipulationEvent) -> None:
        line = json.dumps({"response_id": response_id, "event": event.to_dict()}, ensure_ascii=False)
        path = self._session_dir(session_id)
        with self._lock:
            path.mkdir(parents=True, exist_ok=True)
            with open(path / "events.jsonl", "a", encoding="utf-8") as handle:
                handle.write(line + "\n")

    def read_events(self, session_id: str) -> list[tuple[str, ManipulationEvent]]:
        path = self._session_dir(session_id) / "events.jsonl"
        if not path.exists():
            return []
        events: list[tuple[str, ManipulationEvent]] = []
        with self._lock:
            lines = path.read_text(encoding="utf-8").splitlines()
        for number, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                events.append((record["response_id"], event_from_dict(record["event"])))
            except (json.JSONDecodeError, KeyError, TypeError, ValidationError) as exc:
                raise CorruptCheckpoint(
                    f"event log for {session_id} broken at line {number}: {exc}"
                ) from exc
        return events

    def write_snapshot(self, session_id: str, sequence_no: int, payload: dict[str, Any]) -> None:
        directory = self._session_dir(session_id) / "snapshots"
        with self._lock:
            directory.mkdir(parents=True, exist_ok=True)
            target = directory / f"{sequence_no:08d}.json"
            temporary = directory / f".{sequence_no:08d}.tmp"
            temporary.write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")
            temporary.replace(target)

    def read_latest_snapshot(self, session_id: str) -> tuple[int, dict[str, Any]] | None:
        directory = self._session_dir(session_id) / "snapshots"
        if not directory.is_dir():
            return None
        candidates = sorted(directory.glob("[0-9]*.json"))
        if not candidates:
            return None
        latest = candidates[-1]
        try:
            payload = json.loads(latest.read_text(encoding="utf-8"))
        except (json.JSONDecodeError, OSError) as exc:
            raise CorruptCheckpoint(f"snapshot {latest.name} unreadable: {exc}") from exc
        if not isinstance(payload, dict):
            raise CorruptCheckpoint(f"snapshot {latest.name} does not hold an object")
        return int(latest.stem), payload

    def list_sessions(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if p.is_dir())
