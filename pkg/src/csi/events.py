"""Append-only event log: the single source of truth for a session.

Every state-mutating action appends exactly one event; live session objects
are caches reconstructible by replay (see the server module).  Events
serialize one-per-line as canonical JSON (sorted keys, compact separators),
which is what makes identical runs produce byte-identical log files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Union

from .core import Message, ParticipantKind
from .errors import CorruptLog

KINDS = (
    "session_created",
    "participant_joined",
    "session_started",
    "message_posted",
    "relay_fired",
    "answer_submitted",
    "session_closing",
    "session_closed",
)

_REQUIRED_PAYLOAD_FIELDS = {
    "session_created": {"session_id", "arm", "config"},
    "participant_joined": {"id", "display_name", "kind"},
    "session_started": {"rooms", "edges", "agents"},
    "message_posted": {"message"},
    "relay_fired": {"tick", "injections", "fallbacks"},
    "answer_submitted": {"room_id", "participant_id", "text"},
    "session_closing": set(),
    "session_closed": {"aggregate_answer", "no_answers", "final_answers"},
}

_MESSAGE_FIELDS = (
    "id",
    "room_id",
    "author_id",
    "author_kind",
    "text",
    "seq",
    "timestamp_ms",
    "relayed_from",
)


@dataclass(frozen=True)
class Event:
    """One log record.  ``at_ms`` is session-relative; ``seq_global`` is
    gapless from 1 across the whole session."""

    seq_global: int
    at_ms: int
    kind: str
    payload: dict

    def to_json_line(self) -> str:
        record = {
            "seq_global": self.seq_global,
            "at_ms": self.at_ms,
            "kind": self.kind,
            "payload": self.payload,
        }
        return json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def message_to_payload(message: Message) -> dict:
    return {
        "id": message.id,
        "room_id": message.room_id,
        "author_id": message.author_id,
        "author_kind": message.author_kind.value,
        "text": message.text,
        "seq": message.seq,
        "timestamp_ms": message.timestamp_ms,
        "relayed_from": message.relayed_from,
    }


def message_from_payload(payload: dict) -> Message:
    missing = [f for f in _MESSAGE_FIELDS if f not in payload]
    if missing:
        raise ValueError(f"message payload missing fields {missing}")
    return Message(
        id=payload["id"],
        room_id=payload["room_id"],
        author_id=payload["author_id"],
        author_kind=ParticipantKind(payload["author_kind"]),
        text=payload["text"],
        seq=payload["seq"],
        timestamp_ms=payload["timestamp_ms"],
        relayed_from=payload["relayed_from"],
    )


class EventLog:
    """In-memory event sequence with JSONL persistence.

    ``append`` assigns the next gapless ``seq_global`` and refuses timestamps
    that run backwards; loading validates structure and raises CorruptLog
    naming the first bad record.
    """

    def __init__(self, events: Iterable[Event] = ()):
        self.events: list[Event] = list(events)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    @property
    def last_at_ms(self) -> int:
        return self.events[-1].at_ms if self.events else 0

    def append(self, at_ms: int, kind: str, payload: dict) -> Event:
        if kind not in KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        if self.events and at_ms < self.events[-1].at_ms:
            raise ValueError(
                f"at_ms must be non-decreasing ({at_ms} < {self.events[-1].at_ms})"
            )
        event = Event(
            seq_global=len(self.events) + 1,
            at_ms=at_ms,
            kind=kind,
            payload=payload,
        )
        self.events.append(event)
        return event

    def dumps(self) -> str:
        return "".join(event.to_json_line() + "\n" for event in self.events)

    def dump(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "EventLog":
        events = []
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptLog(f"line {line_no} is not valid JSON: {exc}", line_no)
            events.append(_event_from_record(record, line_no))
        log = cls(events)
        log.validate()
        return log

    @classmethod
    def load(cls, path: Union[str, Path]) -> "EventLog":
        return cls.loads(Path(path).read_text(encoding="utf-8"))

    def validate(self) -> None:
        """Structural checks: non-empty, gapless, time-ordered, well-formed."""
        if not self.events:
            raise CorruptLog("event log is empty", None)
        previous_at = None
        for index, event in enumerate(self.events):
            expected = index + 1
            if event.seq_global != expected:
                raise CorruptLog(
                    f"seq_global gap: expected {expected}, got {event.seq_global}",
                    event.seq_global,
                )
            if event.kind not in KINDS:
                raise CorruptLog(
                    f"unknown event kind {event.kind!r}", event.seq_global
                )
            if previous_at is not None and event.at_ms < previous_at:
                raise CorruptLog(
                    f"at_ms decreases at seq_global {event.seq_global}",
                    event.seq_global,
                )
            previous_at = event.at_ms
            required = _REQUIRED_PAYLOAD_FIELDS[event.kind]
            if not isinstance(event.payload, dict):
                raise CorruptLog(
                    f"payload must be an object at seq_global {event.seq_global}",
                    event.seq_global,
                )
            missing = required - set(event.payload)
            if missing:
                raise CorruptLog(
                    f"{event.kind} payload missing {sorted(missing)} "
                    f"at seq_global {event.seq_global}",
                    event.seq_global,
                )
        if self.events[0].kind != "session_created":
            raise CorruptLog("log must start with session_created", 1)


def _event_from_record(record: dict, line_no: int) -> Event:
    if not isinstance(record, dict):
        raise CorruptLog(f"line {line_no} is not a JSON object", line_no)
    for field_name in ("seq_global", "at_ms", "kind", "payload"):
        if field_name not in record:
            raise CorruptLog(f"line {line_no} missing field {field_name!r}", line_no)
    return Event(
        seq_global=record["seq_global"],
        at_ms=record["at_ms"],
        kind=record["kind"],
        payload=record["payload"],
    )


def log_file_name(session_id: str) -> str:
    return f"{session_id}.events.jsonl"
