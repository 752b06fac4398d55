"""Balanced room partitioning and the directed relay ring.

Participants are shuffled with a seeded generator and dealt round-robin into
``ceil(n / target_size)`` rooms, so sizes never exceed the target and differ
by at most one.  Rooms are then joined into a single directed cycle: the agent
observing room ``i`` posts its summaries into room ``i+1 (mod k)``, which is
what lets content posted anywhere reach every room in at most ``k-1`` relay
ticks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import Message, Participant, seed_to_u64
from .errors import EmptyPopulation, NoTopology


@dataclass
class Room:
    """A deliberation subgroup with a totally ordered message log.

    ``member_ids`` lists humans and bots only; ``agent_id`` references the
    relay agent observing this room (absent in single-room sessions).
    """

    id: int
    member_ids: list[str]
    agent_id: Optional[str] = None
    log: list[Message] = field(default_factory=list)

    @property
    def next_seq(self) -> int:
        return len(self.log) + 1

    def append(self, message: Message) -> None:
        """Append a message, enforcing the gapless per-room seq order."""
        if message.room_id != self.id:
            raise ValueError(
                f"message for room {message.room_id} appended to room {self.id}"
            )
        if message.seq != self.next_seq:
            raise ValueError(
                f"room {self.id} expected seq {self.next_seq}, got {message.seq}"
            )
        self.log.append(message)


@dataclass(frozen=True)
class Topology:
    """Directed edges (source -> target) along which agent summaries flow."""

    k: int
    edges: tuple[tuple[int, int], ...]


def partition_participants(
    participants: Sequence[Participant],
    target_size: int,
    seed: int,
) -> list[Room]:
    """Split participants into ``ceil(n / target_size)`` near-equal rooms.

    The assignment is a seeded uniform shuffle followed by round-robin fill:
    the same (participants, target_size, seed) triple always yields the same
    rooms.  Room sizes differ by at most one and never exceed ``target_size``.
    """
    if not participants:
        raise EmptyPopulation("cannot partition zero participants")
    if target_size < 2:
        raise ValueError(f"target_size must be >= 2, got {target_size}")
    n = len(participants)
    k = math.ceil(n / target_size)
    order = np.random.Generator(np.random.PCG64(seed_to_u64(seed))).permutation(n)
    rooms = [Room(id=i, member_ids=[]) for i in range(k)]
    for position, index in enumerate(order):
        rooms[position % k].member_ids.append(participants[int(index)].id)
    return rooms


def build_ring(rooms: Sequence[Room]) -> Topology:
    """Connect rooms into a single directed cycle 0 -> 1 -> ... -> k-1 -> 0.

    A lone room gets no edges (and therefore no agent).
    """
    if not rooms:
        raise EmptyPopulation("no rooms to connect")
    ids = sorted(room.id for room in rooms)
    if len(set(ids)) != len(ids):
        raise ValueError("room ids must be distinct")
    k = len(ids)
    if k == 1:
        return Topology(k=1, edges=())
    edges = tuple((ids[i], ids[(i + 1) % k]) for i in range(k))
    return Topology(k=k, edges=edges)


def relay_target(topology: Topology, room_id: int) -> int:
    """Return the room into which ``room_id``'s observing agent posts."""
    if topology.k < 2:
        raise NoTopology("single-room session has no relay ring")
    for source, target in topology.edges:
        if source == room_id:
            return target
    raise ValueError(f"room {room_id} has no outgoing edge")
