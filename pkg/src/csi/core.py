"""Domain types and the session lifecycle state machine.

A deliberation session moves Lobby -> Active -> Closing -> Closed, one step at
a time.  Entering Active freezes the roster, partitions it into rooms, and
wires the relay ring; entering Closed aggregates the per-room final answers
into a single plurality answer.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import TYPE_CHECKING, Mapping, Optional

from .errors import EmptyText, IllegalTransition, InvalidConfig, NoAnswers

if TYPE_CHECKING:
    from .topology import Room, Topology


class ParticipantKind(str, Enum):
    HUMAN = "human"
    BOT = "bot"
    AGENT = "agent"


class SessionState(str, Enum):
    LOBBY = "lobby"
    ACTIVE = "active"
    CLOSING = "closing"
    CLOSED = "closed"


_STATE_ORDER = (
    SessionState.LOBBY,
    SessionState.ACTIVE,
    SessionState.CLOSING,
    SessionState.CLOSED,
)

# Real-time conversation quality holds up best in groups of 4-7; configs
# outside that band are legal but warned about.
GROUP_SIZE_COMFORT_BAND = (4, 7)


def seed_to_u64(seed: int) -> int:
    """Map any 64-bit integer (signed included) onto the generator domain."""
    return seed & 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class Participant:
    """One session member: a person, a scripted bot, or a relay agent."""

    id: str
    display_name: str
    kind: ParticipantKind


@dataclass(frozen=True)
class Message:
    """A single chat utterance, totally ordered within its room by ``seq``.

    ``relayed_from`` names the room an agent summarized; it is present exactly
    when the author is an agent.
    """

    id: str
    room_id: int
    author_id: str
    author_kind: ParticipantKind
    text: str
    seq: int
    timestamp_ms: int
    relayed_from: Optional[int] = None

    def __post_init__(self):
        if not self.text.strip():
            raise EmptyText("message text is empty after trimming")
        is_agent = self.author_kind is ParticipantKind.AGENT
        if (self.relayed_from is not None) != is_agent:
            raise ValueError("relayed_from is set exactly for agent-authored messages")
        if self.seq < 1:
            raise ValueError(f"seq starts at 1, got {self.seq}")
        if self.timestamp_ms < 0:
            raise ValueError("timestamp_ms is session-relative and non-negative")


@dataclass(frozen=True)
class SessionConfig:
    """Knobs for one deliberation session.

    Defaults mirror the pilot protocol: groups of ~5, summaries relayed every
    minute, five minutes of discussion.
    """

    question_text: str = ""
    group_size_target: int = 5
    relay_interval_ms: int = 60_000
    time_limit_ms: int = 300_000
    summarizer_backend: str = "extractive"
    summary_max_items: int = 3
    rng_seed: int = 0
    answer_grace_ms: int = 30_000

    def __post_init__(self):
        if not 2 <= self.group_size_target <= 12:
            raise InvalidConfig(
                f"group_size_target must be in [2, 12], got {self.group_size_target}"
            )
        if self.relay_interval_ms <= 0:
            raise InvalidConfig(
                f"relay_interval_ms must be positive, got {self.relay_interval_ms}"
            )
        if self.time_limit_ms < self.relay_interval_ms:
            raise InvalidConfig(
                "time_limit_ms must be >= relay_interval_ms "
                f"({self.time_limit_ms} < {self.relay_interval_ms})"
            )
        if self.summarizer_backend not in ("extractive", "remote_completion"):
            raise InvalidConfig(
                f"summarizer_backend must be 'extractive' or 'remote_completion', "
                f"got {self.summarizer_backend!r}"
            )
        if self.summary_max_items < 1:
            raise InvalidConfig(
                f"summary_max_items must be >= 1, got {self.summary_max_items}"
            )
        if self.answer_grace_ms < 0:
            raise InvalidConfig("answer_grace_ms must be non-negative")
        lo, hi = GROUP_SIZE_COMFORT_BAND
        if not lo <= self.group_size_target <= hi:
            warnings.warn(
                f"group_size_target={self.group_size_target} is outside the "
                f"[{lo}, {hi}] band where real-time deliberation works best",
                stacklevel=2,
            )

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: Mapping) -> "SessionConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidConfig(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)


@dataclass
class Session:
    """Live state of one deliberation.

    Mutated only through the owning command stream (one logical writer);
    see the server module.  ``started_at_ms`` is session-relative so that a
    replayed log reconstructs it exactly.
    """

    id: str
    config: SessionConfig
    state: SessionState = SessionState.LOBBY
    participants: dict[str, Participant] = field(default_factory=dict)
    rooms: "list[Room]" = field(default_factory=list)
    topology: "Optional[Topology]" = None
    started_at_ms: Optional[int] = None
    final_answers: dict[int, str] = field(default_factory=dict)
    aggregate_answer: Optional[str] = None

    def humans_and_bots(self) -> list[Participant]:
        return [
            p for p in self.participants.values()
            if p.kind is not ParticipantKind.AGENT
        ]

    def room_of(self, participant_id: str) -> "Optional[Room]":
        for room in self.rooms:
            if participant_id in room.member_ids:
                return room
        return None


def aggregate_final_answer(answers: Mapping[int, str]) -> str:
    """Pick the plurality answer over rooms, ties going to the lowest room id.

    Answers are trimmed and case-folded before counting; rooms that submitted
    only whitespace are treated as abstaining.  The returned text is the
    trimmed original from the lowest room that submitted the winning answer.
    """
    tallies: dict[str, list] = {}  # normalized -> [count, lowest_room, original]
    for room_id in sorted(answers):
        normalized = answers[room_id].strip().casefold()
        if not normalized:
            continue
        entry = tallies.get(normalized)
        if entry is None:
            tallies[normalized] = [1, room_id, answers[room_id].strip()]
        else:
            entry[0] += 1
    if not tallies:
        raise NoAnswers("every room abstained")
    _, _, winner = max(tallies.values(), key=lambda e: (e[0], -e[1]))
    return winner


def advance_state(
    session: Session,
    target: SessionState,
    *,
    now_ms: int = 0,
    single_room: bool = False,
) -> Session:
    """Move the session exactly one step forward along the lifecycle.

    Entering Active partitions the roster into rooms, builds the relay ring,
    and attaches one agent per room (none when a single room results, e.g. in
    the standard-chat control arm forced by ``single_room``).  Entering Closed
    computes the aggregate answer; if every room abstained the aggregate stays
    absent and the caller records that fact.
    """
    current_idx = _STATE_ORDER.index(session.state)
    target_idx = _STATE_ORDER.index(target)
    if target_idx != current_idx + 1:
        raise IllegalTransition(
            f"{session.state.value} -> {target.value} is not one forward step"
        )
    if target is SessionState.ACTIVE:
        _activate(session, now_ms, single_room)
    if target is SessionState.CLOSED:
        try:
            session.aggregate_answer = aggregate_final_answer(session.final_answers)
        except NoAnswers:
            session.aggregate_answer = None
    session.state = target
    return session


def _activate(session: Session, now_ms: int, single_room: bool) -> None:
    # Imported here: topology depends on core's types, not the other way round.
    from . import topology as _topology

    members = session.humans_and_bots()
    if single_room:
        target = max(2, len(members))
    else:
        target = session.config.group_size_target
    rooms = _topology.partition_participants(members, target, session.config.rng_seed)
    topo = _topology.build_ring(rooms)
    if topo.k >= 2:
        for room in rooms:
            agent = Participant(
                id=f"agent-{room.id}",
                display_name=f"Agent {room.id}",
                kind=ParticipantKind.AGENT,
            )
            session.participants[agent.id] = agent
            room.agent_id = agent.id
    session.rooms = rooms
    session.topology = topo
    session.started_at_ms = now_ms
