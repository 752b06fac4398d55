"""Session orchestration: the serialized command stream, relay/deadline
clock, and deterministic replay.

One SessionRuntime owns one session.  Every mutation (join, start, post,
answer, tick, close) goes through a runtime method, appends exactly one event
to the log, and returns the wire frames to deliver.  The clock schedule is
explicit data (timestamp, priority class, command), executed either
immediately in order (virtual clock) or with scaled sleeps (wall clock);
commands are stamped with their scheduled times, so both executions emit
byte-identical logs.  ``replay`` folds a log back into a Session without
re-running any agent or scheduling logic.
"""

from __future__ import annotations

import heapq
import time
import uuid
from typing import Callable, Optional, Sequence, Union

from . import agent as _agent
from .core import (
    Message,
    Participant,
    ParticipantKind,
    Session,
    SessionConfig,
    SessionState,
    advance_state,
)
from .errors import (
    CorruptLog,
    EmptyText,
    NotActive,
    NotMember,
)
from .events import Event, EventLog, message_from_payload, message_to_payload
from .metrics import Lexicon
from .topology import Room, Topology, relay_target
from .wire import (
    AssignedFrame,
    ClosedFrame,
    Frame,
    MessageFrame,
    QuestionFrame,
    RosterEntry,
)

Delivery = tuple[str, Frame]  # (participant id, frame to send)

ARMS = ("csi", "control")

# Priority classes for commands scheduled at the same millisecond: posts land
# before the tick that will relay them; answers follow the closing edge.
KLASS_POST = 0
KLASS_TICK = 1
KLASS_CLOSING = 2
KLASS_ANSWER = 3
KLASS_CLOSE = 4


class CommandSchedule:
    """Priority queue of (at_ms, klass, command); stable within a key."""

    def __init__(self):
        self._heap: list[tuple[int, int, int, Callable[[int], object]]] = []
        self._counter = 0

    def push(self, at_ms: int, klass: int, command: Callable[[int], object]) -> None:
        heapq.heappush(self._heap, (at_ms, klass, self._counter, command))
        self._counter += 1

    def pop(self) -> tuple[int, int, int, Callable[[int], object]]:
        return heapq.heappop(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)


class VirtualScheduler:
    """Runs the schedule immediately, in timestamp order.  Five simulated
    minutes take milliseconds of CPU."""

    def run(self, schedule: CommandSchedule) -> None:
        while schedule:
            at_ms, _klass, _order, command = schedule.pop()
            command(at_ms)


class WallScheduler:
    """Runs the schedule against the wall clock, compressed by time_scale.

    Commands still receive their scheduled timestamps, so the resulting event
    log is identical to a virtual run of the same schedule.
    """

    def __init__(self, time_scale: float = 1.0):
        if time_scale <= 0:
            raise ValueError("time_scale must be positive")
        self.time_scale = time_scale

    def run(self, schedule: CommandSchedule) -> None:
        start = time.monotonic()
        while schedule:
            at_ms, _klass, _order, command = schedule.pop()
            target = start + at_ms / 1000.0 / self.time_scale
            delay = target - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            command(at_ms)


class SessionRuntime:
    """Owner of one session's command stream.

    The event log is the source of truth; the Session object is a cache that
    ``replay`` reconstructs field-for-field.  All methods assume they are
    called from a single logical writer.
    """

    def __init__(
        self,
        session: Session,
        arm: str,
        log: EventLog,
        lexicon: Optional[Lexicon] = None,
        service: Optional[_agent.CompletionService] = None,
    ):
        self.session = session
        self.arm = arm
        self.log = log
        self.lexicon = lexicon
        self.service = service
        self.agents: dict[int, _agent.RelayAgent] = {}
        self._message_counter = 0
        self._participant_counter = 0

    # ------------------------------------------------------------------
    # Commands
    # ------------------------------------------------------------------

    @classmethod
    def create(
        cls,
        config: SessionConfig,
        session_id: Optional[str] = None,
        arm: str = "csi",
        at_ms: int = 0,
        lexicon: Optional[Lexicon] = None,
        service: Optional[_agent.CompletionService] = None,
    ) -> "SessionRuntime":
        """Create a Lobby session and append its session_created event."""
        if arm not in ARMS:
            raise ValueError(f"arm must be one of {ARMS}, got {arm!r}")
        sid = session_id or uuid.uuid4().hex[:12]
        session = Session(id=sid, config=config)
        runtime = cls(session, arm, EventLog(), lexicon=lexicon, service=service)
        runtime.log.append(
            at_ms,
            "session_created",
            {"session_id": sid, "arm": arm, "config": config.to_dict()},
        )
        return runtime

    def join(
        self,
        display_name: str,
        kind: ParticipantKind = ParticipantKind.HUMAN,
        participant_id: Optional[str] = None,
        at_ms: int = 0,
    ) -> Participant:
        if self.session.state is not SessionState.LOBBY:
            raise NotActive("participants can only join while the session is in the lobby")
        pid = participant_id
        if pid is None:
            pid = f"p{self._participant_counter:03d}"
            self._participant_counter += 1
        if pid in self.session.participants:
            raise ValueError(f"participant id {pid!r} already joined")
        participant = Participant(id=pid, display_name=display_name, kind=kind)
        self.session.participants[pid] = participant
        self.log.append(
            at_ms,
            "participant_joined",
            {"id": pid, "display_name": display_name, "kind": kind.value},
        )
        return participant

    def start(self, at_ms: int = 0) -> list[Delivery]:
        """Activate: partition into rooms, wire the ring, attach agents."""
        advance_state(
            self.session,
            SessionState.ACTIVE,
            now_ms=at_ms,
            single_room=(self.arm == "control"),
        )
        topo = self.session.topology
        assert topo is not None
        if topo.k >= 2:
            for room in self.session.rooms:
                self.agents[room.id] = _agent.RelayAgent(
                    participant_id=room.agent_id,
                    source_room=room.id,
                    target_room=relay_target(topo, room.id),
                )
        self.log.append(at_ms, "session_started", self._started_payload())
        deliveries: list[Delivery] = []
        question = QuestionFrame(
            text=self.session.config.question_text,
            deadline_ms=self.session.config.time_limit_ms,
        )
        for room in self.session.rooms:
            assigned = AssignedFrame(room=room.id, members=self._roster(room))
            for pid in room.member_ids:
                deliveries.append((pid, assigned))
                deliveries.append((pid, question))
        return deliveries

    def post(
        self,
        participant_id: str,
        text: str,
        at_ms: int,
        room_id: Optional[int] = None,
    ) -> tuple[Message, list[Delivery]]:
        """Append a participant's message to their room, with the next seq.

        ``room_id``, when given, must be the poster's own room: humans and
        bots cannot address other rooms.
        """
        if self.session.state is not SessionState.ACTIVE:
            raise NotActive(f"session is {self.session.state.value}, not active")
        participant = self.session.participants.get(participant_id)
        if participant is None or participant.kind is ParticipantKind.AGENT:
            raise NotMember(f"{participant_id!r} is not a posting member")
        room = self.session.room_of(participant_id)
        if room is None:
            raise NotMember(f"{participant_id!r} is not assigned to a room")
        if room_id is not None and room_id != room.id:
            raise NotMember(
                f"{participant_id!r} belongs to room {room.id}, not {room_id}"
            )
        if not text.strip():
            raise EmptyText("message text is empty after trimming")
        message = Message(
            id=self._next_message_id(),
            room_id=room.id,
            author_id=participant_id,
            author_kind=participant.kind,
            text=text,
            seq=room.next_seq,
            timestamp_ms=at_ms,
        )
        room.append(message)
        self.log.append(at_ms, "message_posted", {"message": message_to_payload(message)})
        return message, self._message_deliveries(message)

    def submit_answer(self, participant_id: str, text: str, at_ms: int) -> None:
        """Record a room's candidate final answer; the last one per room wins."""
        if self.session.state not in (SessionState.ACTIVE, SessionState.CLOSING):
            raise NotActive(
                f"answers are not accepted while the session is {self.session.state.value}"
            )
        participant = self.session.participants.get(participant_id)
        if participant is None or participant.kind is ParticipantKind.AGENT:
            raise NotMember(f"{participant_id!r} cannot submit answers")
        room = self.session.room_of(participant_id)
        if room is None:
            raise NotMember(f"{participant_id!r} is not assigned to a room")
        if not text.strip():
            raise EmptyText("answer text is empty after trimming")
        self.session.final_answers[room.id] = text.strip()
        self.log.append(
            at_ms,
            "answer_submitted",
            {"room_id": room.id, "participant_id": participant_id, "text": text.strip()},
        )

    def relay_tick(self, at_ms: int, tick_index: int) -> tuple[list[Message], list[Delivery]]:
        """Fire all relay agents once.  A no-op (and no event) without a ring."""
        if self.session.state is not SessionState.ACTIVE:
            return [], []
        if not self.agents:
            return [], []
        injected, fallbacks = _agent.relay_tick(
            self.session,
            self.agents,
            at_ms,
            lexicon=self.lexicon,
            service=self.service,
            make_id=self._next_message_id,
        )
        self.log.append(
            at_ms,
            "relay_fired",
            {
                "tick": tick_index,
                "injections": [message_to_payload(m) for m in injected],
                "fallbacks": sorted(fallbacks),
            },
        )
        deliveries: list[Delivery] = []
        for message in injected:
            deliveries.extend(self._message_deliveries(message))
        return injected, deliveries

    def begin_closing(self, at_ms: int) -> list[Delivery]:
        advance_state(self.session, SessionState.CLOSING)
        self.log.append(at_ms, "session_closing", {})
        return []

    def close(self, at_ms: int) -> list[Delivery]:
        """Aggregate final answers and close; absent answers close as none."""
        advance_state(self.session, SessionState.CLOSED)
        aggregate = self.session.aggregate_answer
        self.log.append(
            at_ms,
            "session_closed",
            {
                "aggregate_answer": aggregate,
                "no_answers": aggregate is None,
                "final_answers": {
                    str(room_id): text
                    for room_id, text in sorted(self.session.final_answers.items())
                },
            },
        )
        closed = ClosedFrame(final=aggregate)
        return [(p.id, closed) for p in self.session.humans_and_bots()]

    # ------------------------------------------------------------------
    # Helpers
    # ------------------------------------------------------------------

    def _next_message_id(self) -> str:
        self._message_counter += 1
        return f"m{self._message_counter:05d}"

    def _roster(self, room: Room) -> tuple[RosterEntry, ...]:
        entries = []
        for pid in room.member_ids:
            participant = self.session.participants[pid]
            entries.append(
                RosterEntry(
                    id=pid,
                    name=participant.display_name,
                    kind=participant.kind.value,
                )
            )
        return tuple(entries)

    def _message_deliveries(self, message: Message) -> list[Delivery]:
        room = next(r for r in self.session.rooms if r.id == message.room_id)
        author = self.session.participants[message.author_id]
        frame = MessageFrame(
            room=message.room_id,
            seq=message.seq,
            author=author.display_name,
            author_kind=message.author_kind.value,
            text=message.text,
            relayed_from=message.relayed_from,
        )
        return [(pid, frame) for pid in room.member_ids]

    def _started_payload(self) -> dict:
        topo = self.session.topology
        return {
            "rooms": [
                {"id": room.id, "member_ids": list(room.member_ids), "agent_id": room.agent_id}
                for room in self.session.rooms
            ],
            "edges": [list(edge) for edge in (topo.edges if topo else ())],
            "agents": [
                {"id": p.id, "display_name": p.display_name}
                for p in self.session.participants.values()
                if p.kind is ParticipantKind.AGENT
            ],
        }


def schedule_session_clock(runtime: SessionRuntime, schedule: CommandSchedule) -> None:
    """Push the relay ticks, the closing edge, and the final close.

    Ticks fire at every multiple of the relay interval strictly before the
    time limit (the limit instant belongs to closing); the close lands one
    answer-grace window later.
    """
    config = runtime.session.config
    tick_index = 1
    while tick_index * config.relay_interval_ms < config.time_limit_ms:
        at = tick_index * config.relay_interval_ms
        schedule.push(
            at,
            KLASS_TICK,
            lambda at_ms, idx=tick_index: runtime.relay_tick(at_ms, idx),
        )
        tick_index += 1
    schedule.push(config.time_limit_ms, KLASS_CLOSING, runtime.begin_closing)
    schedule.push(
        config.time_limit_ms + config.answer_grace_ms, KLASS_CLOSE, runtime.close
    )


def run_clock(
    runtime: SessionRuntime,
    schedule: Optional[CommandSchedule] = None,
    scheduler: Optional[Union[VirtualScheduler, WallScheduler]] = None,
) -> EventLog:
    """Drive an Active session to Closed on the given scheduler."""
    if runtime.session.state is not SessionState.ACTIVE:
        raise NotActive("run_clock needs an active session")
    schedule = schedule or CommandSchedule()
    schedule_session_clock(runtime, schedule)
    (scheduler or VirtualScheduler()).run(schedule)
    return runtime.log


# ----------------------------------------------------------------------
# Replay
# ----------------------------------------------------------------------


def replay(source: Union[EventLog, Sequence[Event], str]) -> Session:
    """Fold an event log back into the exact terminal Session.

    Pure log application: rooms, messages, answers, and the aggregate come
    from payloads, never from re-running partitioning or agents.  Idempotent.
    Raises CorruptLog naming the first bad record.
    """
    if isinstance(source, str):
        log = EventLog.load(source)
    elif isinstance(source, EventLog):
        log = EventLog(list(source.events))
        log.validate()
    else:
        log = EventLog(list(source))
        log.validate()

    session: Optional[Session] = None
    for event in log:
        try:
            session = _apply(session, event)
        except CorruptLog:
            raise
        except Exception as exc:
            raise CorruptLog(
                f"{event.kind} payload invalid at seq_global {event.seq_global}: {exc}",
                event.seq_global,
            )
    assert session is not None  # validate() guarantees session_created
    return session


def _corrupt(event: Event, why: str) -> CorruptLog:
    return CorruptLog(f"{why} at seq_global {event.seq_global}", event.seq_global)


def _apply(session: Optional[Session], event: Event) -> Session:
    kind = event.kind
    payload = event.payload
    if kind == "session_created":
        if session is not None:
            raise _corrupt(event, "duplicate session_created")
        config = SessionConfig.from_dict(payload["config"])
        return Session(id=payload["session_id"], config=config)
    if session is None:
        raise _corrupt(event, "event before session_created")

    if kind == "participant_joined":
        if session.state is not SessionState.LOBBY:
            raise _corrupt(event, "participant_joined outside lobby")
        pid = payload["id"]
        if pid in session.participants:
            raise _corrupt(event, f"duplicate participant {pid!r}")
        session.participants[pid] = Participant(
            id=pid,
            display_name=payload["display_name"],
            kind=ParticipantKind(payload["kind"]),
        )
        return session

    if kind == "session_started":
        if session.state is not SessionState.LOBBY:
            raise _corrupt(event, "session_started out of order")
        rooms = []
        for room_record in payload["rooms"]:
            rooms.append(
                Room(
                    id=room_record["id"],
                    member_ids=list(room_record["member_ids"]),
                    agent_id=room_record.get("agent_id"),
                )
            )
        edges = tuple(tuple(edge) for edge in payload["edges"])
        for agent_record in payload["agents"]:
            session.participants[agent_record["id"]] = Participant(
                id=agent_record["id"],
                display_name=agent_record["display_name"],
                kind=ParticipantKind.AGENT,
            )
        session.rooms = rooms
        session.topology = Topology(k=len(rooms), edges=edges)
        session.started_at_ms = event.at_ms
        session.state = SessionState.ACTIVE
        return session

    if kind in ("message_posted", "relay_fired"):
        if session.state is not SessionState.ACTIVE:
            raise _corrupt(event, f"{kind} outside the active phase")
        if kind == "message_posted":
            message_payloads = [payload["message"]]
        else:
            message_payloads = payload["injections"]
        rooms = {room.id: room for room in session.rooms}
        for message_payload in message_payloads:
            message = message_from_payload(message_payload)
            room = rooms.get(message.room_id)
            if room is None:
                raise _corrupt(event, f"unknown room {message.room_id}")
            if message.seq != room.next_seq:
                raise _corrupt(
                    event,
                    f"room {room.id} seq gap: expected {room.next_seq}, got {message.seq}",
                )
            room.append(message)
        return session

    if kind == "answer_submitted":
        if session.state not in (SessionState.ACTIVE, SessionState.CLOSING):
            raise _corrupt(event, "answer_submitted outside active/closing")
        room_id = payload["room_id"]
        if room_id not in {room.id for room in session.rooms}:
            raise _corrupt(event, f"unknown room {room_id}")
        session.final_answers[room_id] = payload["text"]
        return session

    if kind == "session_closing":
        if session.state is not SessionState.ACTIVE:
            raise _corrupt(event, "session_closing out of order")
        session.state = SessionState.CLOSING
        return session

    if kind == "session_closed":
        if session.state is not SessionState.CLOSING:
            raise _corrupt(event, "session_closed out of order")
        session.state = SessionState.CLOSED
        session.aggregate_answer = payload["aggregate_answer"]
        return session

    raise _corrupt(event, f"unknown event kind {kind!r}")
