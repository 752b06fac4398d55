"""Conversational swarm chat platform.

Large groups deliberate in parallel small rooms; each room's relay agent
distills its dialog every interval and voices it in the neighboring room, so
content propagates around the whole population while conversations stay
small enough to be real conversations.
"""

from .core import (
    Message,
    Participant,
    ParticipantKind,
    Session,
    SessionConfig,
    SessionState,
    advance_state,
    aggregate_final_answer,
)
from .errors import CsiError
from .events import Event, EventLog
from .metrics import (
    Category,
    ComparisonReport,
    ContributionStats,
    classify,
    compare,
    contribution_stats,
)
from .server import SessionRuntime, replay, run_clock
from .simharness import BotScript, probe_propagation, run_experiment
from .topology import Room, Topology, build_ring, partition_participants, relay_target

__version__ = "0.1.0"

__all__ = [
    "BotScript",
    "Category",
    "ComparisonReport",
    "ContributionStats",
    "CsiError",
    "Event",
    "EventLog",
    "Message",
    "Participant",
    "ParticipantKind",
    "Room",
    "Session",
    "SessionConfig",
    "SessionRuntime",
    "SessionState",
    "Topology",
    "advance_state",
    "aggregate_final_answer",
    "build_ring",
    "classify",
    "compare",
    "contribution_stats",
    "partition_participants",
    "probe_propagation",
    "relay_target",
    "replay",
    "run_clock",
    "run_experiment",
]
