"""Event feed and on-disk persistence.

Every notable occurrence in the range (boots, injections, commands, facts,
detections, operation lifecycle) becomes one sequenced event. The feed is
held in memory for live consumers and, when a data directory is set,
mirrored append-only to `events.jsonl`. Operation records are additionally
exported as standalone JSON documents.
"""

from __future__ import annotations

import json
import logging
import threading
from datetime import datetime, timezone
from pathlib import Path

logger = logging.getLogger(__name__)


class EventLog:
    def __init__(self, path: str | Path | None = None):
        self._events: list[dict] = []
        self._lock = threading.Lock()
        self._path = Path(path) if path is not None else None
        if self._path is not None:
            self._path.parent.mkdir(parents=True, exist_ok=True)

    def emit(self, kind: str, data: dict) -> dict:
        with self._lock:
            event = {
                "seq": len(self._events),
                "ts": datetime.now(timezone.utc).isoformat(),
                "kind": kind,
                "data": data,
            }
            self._events.append(event)
            if self._path is not None:
                with self._path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(event, sort_keys=True) + "\n")
            return event

    def since(self, seq: int) -> list[dict]:
        """Events with sequence number >= seq."""
        with self._lock:
            if seq <= 0:
                return list(self._events)
            return self._events[seq:]

    def all(self) -> list[dict]:
        return self.since(0)

    @property
    def next_seq(self) -> int:
        with self._lock:
            return len(self._events)

    @staticmethod
    def replay(path: str | Path) -> list[dict]:
        """Read a mirrored feed back from disk, in order. Corrupt lines
        (truncated tail, stray garbage) are skipped with a warning."""
        events = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    events.append(json.loads(line))
                except json.JSONDecodeError:
                    logger.warning("skipping corrupt event at %s:%d", path, lineno)
        events.sort(key=lambda e: e["seq"])
        return events


def export_json(path: str | Path, document: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_operations(data_dir: str | Path) -> list[dict]:
    """Read back every exported operation record, in id order."""
    ops_dir = Path(data_dir) / "operations"
    if not ops_dir.is_dir():
        return []
    paths = sorted(ops_dir.glob("*.json"), key=lambda p: (len(p.stem), p.stem))
    return [json.loads(p.read_text(encoding="utf-8")) for p in paths]
