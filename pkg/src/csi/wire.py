"""Wire protocol: one JSON object per frame, UTF-8, over a persistent
bidirectional stream (WebSocket in the reference deployment).

Client to server: join, post, answer.  Server to client: assigned, question,
message, closed.  Encoding is canonical (sorted keys, compact separators) so
every frame round-trips byte-identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Union

from .errors import InvalidFrame


@dataclass(frozen=True)
class RosterEntry:
    id: str
    name: str
    kind: str


@dataclass(frozen=True)
class JoinFrame:
    session: str
    name: str


@dataclass(frozen=True)
class PostFrame:
    text: str


@dataclass(frozen=True)
class AnswerFrame:
    text: str


@dataclass(frozen=True)
class AssignedFrame:
    room: int
    members: tuple[RosterEntry, ...]


@dataclass(frozen=True)
class QuestionFrame:
    text: str
    deadline_ms: int


@dataclass(frozen=True)
class MessageFrame:
    room: int
    seq: int
    author: str
    author_kind: str
    text: str
    relayed_from: Optional[int]


@dataclass(frozen=True)
class ClosedFrame:
    final: Optional[str]


Frame = Union[
    JoinFrame,
    PostFrame,
    AnswerFrame,
    AssignedFrame,
    QuestionFrame,
    MessageFrame,
    ClosedFrame,
]

_KINDS = ("human", "bot", "agent")


def encode_frame(frame: Frame) -> str:
    if isinstance(frame, JoinFrame):
        body = {"type": "join", "session": frame.session, "name": frame.name}
    elif isinstance(frame, PostFrame):
        body = {"type": "post", "text": frame.text}
    elif isinstance(frame, AnswerFrame):
        body = {"type": "answer", "text": frame.text}
    elif isinstance(frame, AssignedFrame):
        body = {
            "type": "assigned",
            "room": frame.room,
            "members": [
                {"id": m.id, "name": m.name, "kind": m.kind} for m in frame.members
            ],
        }
    elif isinstance(frame, QuestionFrame):
        body = {"type": "question", "text": frame.text, "deadline_ms": frame.deadline_ms}
    elif isinstance(frame, MessageFrame):
        body = {
            "type": "message",
            "room": frame.room,
            "seq": frame.seq,
            "author": frame.author,
            "author_kind": frame.author_kind,
            "text": frame.text,
            "relayed_from": frame.relayed_from,
        }
    elif isinstance(frame, ClosedFrame):
        body = {"type": "closed", "final": frame.final}
    else:
        raise InvalidFrame(f"unknown frame object {type(frame).__name__}")
    return json.dumps(body, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _require(body: dict, field: str, types) -> object:
    if field not in body:
        raise InvalidFrame(f"frame missing field {field!r}")
    value = body[field]
    if not isinstance(value, types):
        raise InvalidFrame(f"frame field {field!r} has the wrong type")
    return value


def _require_int(body: dict, field: str) -> int:
    value = _require(body, field, int)
    if isinstance(value, bool):
        raise InvalidFrame(f"frame field {field!r} has the wrong type")
    return value


def _check_extra(body: dict, allowed: set) -> None:
    extra = set(body) - allowed - {"type"}
    if extra:
        raise InvalidFrame(f"frame has unexpected fields {sorted(extra)}")


def decode_frame(data: str) -> Frame:
    """Strictly decode one frame; unknown types or malformed bodies raise
    InvalidFrame."""
    try:
        body = json.loads(data)
    except json.JSONDecodeError as exc:
        raise InvalidFrame(f"frame is not valid JSON: {exc}")
    if not isinstance(body, dict):
        raise InvalidFrame("frame must be a JSON object")
    frame_type = body.get("type")
    if frame_type == "join":
        _check_extra(body, {"session", "name"})
        return JoinFrame(
            session=_require(body, "session", str),
            name=_require(body, "name", str),
        )
    if frame_type == "post":
        _check_extra(body, {"text"})
        return PostFrame(text=_require(body, "text", str))
    if frame_type == "answer":
        _check_extra(body, {"text"})
        return AnswerFrame(text=_require(body, "text", str))
    if frame_type == "assigned":
        _check_extra(body, {"room", "members"})
        members = _require(body, "members", list)
        entries = []
        for member in members:
            if not isinstance(member, dict):
                raise InvalidFrame("assigned members must be objects")
            kind = _require(member, "kind", str)
            if kind not in _KINDS:
                raise InvalidFrame(f"unknown participant kind {kind!r}")
            entries.append(
                RosterEntry(
                    id=_require(member, "id", str),
                    name=_require(member, "name", str),
                    kind=kind,
                )
            )
        return AssignedFrame(room=_require_int(body, "room"), members=tuple(entries))
    if frame_type == "question":
        _check_extra(body, {"text", "deadline_ms"})
        return QuestionFrame(
            text=_require(body, "text", str),
            deadline_ms=_require_int(body, "deadline_ms"),
        )
    if frame_type == "message":
        _check_extra(body, {"room", "seq", "author", "author_kind", "text", "relayed_from"})
        author_kind = _require(body, "author_kind", str)
        if author_kind not in _KINDS:
            raise InvalidFrame(f"unknown author_kind {author_kind!r}")
        if "relayed_from" not in body:
            raise InvalidFrame("frame missing field 'relayed_from'")
        relayed_from = body["relayed_from"]
        if relayed_from is not None and (
            not isinstance(relayed_from, int) or isinstance(relayed_from, bool)
        ):
            raise InvalidFrame("relayed_from must be a room id or null")
        return MessageFrame(
            room=_require_int(body, "room"),
            seq=_require_int(body, "seq"),
            author=_require(body, "author", str),
            author_kind=author_kind,
            text=_require(body, "text", str),
            relayed_from=relayed_from,
        )
    if frame_type == "closed":
        _check_extra(body, {"final"})
        if "final" not in body:
            raise InvalidFrame("frame missing field 'final'")
        final = body["final"]
        if final is not None and not isinstance(final, str):
            raise InvalidFrame("closed.final must be text or null")
        return ClosedFrame(final=final)
    raise InvalidFrame(f"unknown frame type {frame_type!r}")
