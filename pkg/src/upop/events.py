"""Append-only protocol event log, serialized as JSON lines."""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, Iterable, Iterator


@dataclass(frozen=True)
class Event:
    t: datetime
    ceremony: int | None
    currency: bytes | None
    kind: str
    payload: dict


def jsonable(obj: Any) -> Any:
    """Recursively convert bytes to lowercase hex and datetimes to ISO text."""
    if isinstance(obj, (bytes, bytearray)):
        return bytes(obj).hex()
    if isinstance(obj, datetime):
        return obj.isoformat()
    if isinstance(obj, dict):
        return {str(k) if not isinstance(k, bytes) else k.hex(): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = [jsonable(v) for v in obj]
        return sorted(items) if isinstance(obj, (set, frozenset)) else items
    return obj


class EventLog:
    """Keeps events in memory; ``kinds`` restricts which kinds are retained.

    Large simulations pass a narrow ``kinds`` set to avoid holding millions
    of attestation records.
    """

    def __init__(self, kinds: Iterable[str] | None = None):
        self.kinds = None if kinds is None else frozenset(kinds)
        self._events: list[Event] = []

    def wants(self, kind: str) -> bool:
        return self.kinds is None or kind in self.kinds

    def append(self, t: datetime, ceremony: int | None, currency: bytes | None, kind: str, payload: dict) -> None:
        if self.wants(kind):
            self._events.append(Event(t, ceremony, currency, kind, payload))

    def __iter__(self) -> Iterator[Event]:
        return iter(self._events)

    def __len__(self) -> int:
        return len(self._events)

    def of_kind(self, *kinds: str) -> list[Event]:
        return [e for e in self._events if e.kind in kinds]

    def to_records(self) -> list[dict]:
        return [
            {
                "t": e.t.isoformat(),
                "ceremony": e.ceremony,
                "currency": e.currency.hex() if e.currency is not None else None,
                "kind": e.kind,
                "payload": jsonable(e.payload),
            }
            for e in self._events
        ]

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for rec in self.to_records():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
