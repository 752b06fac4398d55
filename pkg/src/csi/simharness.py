"""Deterministic desk-scale reproduction of the pilot protocol.

Scripted bots stand in for the ~25 human volunteers: each follows a fixed
posting schedule under a virtual clock, optionally echoing never-before-seen
ALL-CAPS tokens it observes (the minimal model of a participant picking up a
relayed idea).  The same bot population runs in either arm — conversational
swarm (partitioned rooms plus relay ring) or standard chat (one room, no
agents) — and the resulting event logs feed the metrics pipeline.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import topology as _topology
from .core import Participant, ParticipantKind, SessionConfig, seed_to_u64
from .errors import NoTopology, TokenCollision
from .events import EventLog
from .metrics import Lexicon
from .server import (
    KLASS_ANSWER,
    KLASS_CLOSE,
    KLASS_CLOSING,
    KLASS_POST,
    KLASS_TICK,
    CommandSchedule,
    SessionRuntime,
    VirtualScheduler,
)

# An ALL-CAPS token: three or more capitals, digits allowed after the first.
TOKEN_RE = re.compile(r"\b[A-Z][A-Z0-9]{2,}\b")

ECHO_DELAY_MS = 1000


@dataclass(frozen=True)
class BotScript:
    """One scripted participant: timed posts, an optional final answer, and
    whether it echoes fresh ALL-CAPS tokens (once each, a second later)."""

    bot_id: str
    schedule: tuple[tuple[int, str], ...] = ()
    answer: Optional[str] = None
    echo_tokens: bool = False
    display_name: Optional[str] = None

    @property
    def name(self) -> str:
        return self.display_name or self.bot_id

    def to_dict(self) -> dict:
        return {
            "bot_id": self.bot_id,
            "schedule": [[at, text] for at, text in self.schedule],
            "answer": self.answer,
            "echo_tokens": self.echo_tokens,
            "display_name": self.display_name,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BotScript":
        return cls(
            bot_id=data["bot_id"],
            schedule=tuple((int(at), text) for at, text in data.get("schedule", [])),
            answer=data.get("answer"),
            echo_tokens=bool(data.get("echo_tokens", False)),
            display_name=data.get("display_name"),
        )


@dataclass
class PropagationProbe:
    """First-appearance tick of a unique token, per room."""

    token: str
    origin_room: int
    arrival_ticks: dict[int, int]


def _validate_scripts(bots: Sequence[BotScript], config: SessionConfig) -> None:
    seen_ids = set()
    for bot in bots:
        if bot.bot_id in seen_ids:
            raise ValueError(f"duplicate bot id {bot.bot_id!r}")
        seen_ids.add(bot.bot_id)
        previous = -1
        for at_ms, text in bot.schedule:
            if at_ms <= previous:
                raise ValueError(
                    f"bot {bot.bot_id!r} schedule times must be strictly increasing"
                )
            if at_ms >= config.time_limit_ms:
                raise ValueError(
                    f"bot {bot.bot_id!r} schedules a post at {at_ms} ms, "
                    f"past the {config.time_limit_ms} ms limit"
                )
            if not text.strip():
                raise ValueError(f"bot {bot.bot_id!r} schedules an empty post")
            previous = at_ms


def run_experiment(
    config: SessionConfig,
    bots: Sequence[BotScript],
    arm: str = "csi",
    seed: int = 0,
    session_id: Optional[str] = None,
    lexicon: Optional[Lexicon] = None,
) -> EventLog:
    """Run one complete session under a virtual clock and return its log.

    ``arm="control"`` forces a single room with no agents; ``arm="csi"``
    partitions per the config.  Byte-identical across repeated runs with the
    same inputs.
    """
    return run_experiment_runtime(config, bots, arm, seed, session_id, lexicon).log


def run_experiment_runtime(
    config: SessionConfig,
    bots: Sequence[BotScript],
    arm: str = "csi",
    seed: int = 0,
    session_id: Optional[str] = None,
    lexicon: Optional[Lexicon] = None,
) -> SessionRuntime:
    """Like run_experiment but hands back the runtime, live session included.

    Useful when a caller wants to compare the live terminal state against a
    replay of the log.
    """
    _validate_scripts(bots, config)
    config = replace(config, rng_seed=seed)
    runtime = SessionRuntime.create(
        config,
        session_id=session_id or f"sim-{arm}-{seed}",
        arm=arm,
        lexicon=lexicon,
    )
    bots_by_id = {bot.bot_id: bot for bot in bots}
    for bot in bots:
        runtime.join(bot.name, ParticipantKind.BOT, participant_id=bot.bot_id, at_ms=0)
    runtime.start(at_ms=0)

    schedule = CommandSchedule()
    session = runtime.session
    seen_tokens: dict[str, set[str]] = {bot.bot_id: set() for bot in bots}
    rooms_by_id = {room.id: room for room in session.rooms}

    def observe(message) -> None:
        """Fan a fresh message out to the bots in its room; echo new tokens."""
        room = rooms_by_id[message.room_id]
        tokens = TOKEN_RE.findall(message.text)
        for pid in room.member_ids:
            bot = bots_by_id.get(pid)
            if bot is None:
                continue
            fresh = [t for t in tokens if t not in seen_tokens[pid]]
            seen_tokens[pid].update(tokens)
            if not bot.echo_tokens or message.author_id == pid:
                continue
            echo_at = message.timestamp_ms + ECHO_DELAY_MS
            if echo_at >= config.time_limit_ms:
                continue
            for token in fresh:
                schedule.push(echo_at, KLASS_POST, _make_post(pid, token))

    def _make_post(pid: str, text: str):
        def command(at_ms: int):
            message, _ = runtime.post(pid, text, at_ms)
            observe(message)

        return command

    def _tick(at_ms: int, index: int):
        injected, _ = runtime.relay_tick(at_ms, index)
        for message in injected:
            observe(message)

    for bot in bots:
        for at_ms, text in bot.schedule:
            schedule.push(at_ms, KLASS_POST, _make_post(bot.bot_id, text))
    tick_index = 1
    while tick_index * config.relay_interval_ms < config.time_limit_ms:
        at = tick_index * config.relay_interval_ms
        schedule.push(at, KLASS_TICK, lambda at_ms, idx=tick_index: _tick(at_ms, idx))
        tick_index += 1
    schedule.push(config.time_limit_ms, KLASS_CLOSING, runtime.begin_closing)
    for bot in bots:
        if bot.answer:
            schedule.push(
                config.time_limit_ms,
                KLASS_ANSWER,
                lambda at_ms, pid=bot.bot_id, text=bot.answer: runtime.submit_answer(
                    pid, text, at_ms
                ),
            )
    schedule.push(
        config.time_limit_ms + config.answer_grace_ms, KLASS_CLOSE, runtime.close
    )

    VirtualScheduler().run(schedule)
    return runtime


def probe_propagation(
    config: SessionConfig,
    token: str,
    origin_room: int,
    seed: int,
    k: int,
) -> PropagationProbe:
    """Seed a unique token in one room and record when it reaches each room.

    Builds ``k`` rooms of echo bots, posts the token as a suggestion in the
    origin room before the first tick, runs enough ticks for a full lap of
    the ring, and reports the tick index of the token's first appearance per
    room.  On the unidirectional ring that index equals the hop distance.
    """
    if k < 2:
        raise NoTopology("propagation needs at least two rooms")
    if not TOKEN_RE.fullmatch(token):
        raise ValueError(f"token {token!r} must be ALL-CAPS (3+ characters)")
    if not 0 <= origin_room < k:
        raise ValueError(f"origin_room must be in [0, {k}), got {origin_room}")
    interval = config.relay_interval_ms
    config = replace(
        config,
        rng_seed=seed,
        time_limit_ms=(k + 1) * interval,
    )
    if token in config.question_text:
        raise TokenCollision(f"token {token!r} already appears in the question text")

    n = k * config.group_size_target
    bots = [
        BotScript(bot_id=f"bot{i:03d}", echo_tokens=True) for i in range(n)
    ]
    for bot in bots:
        for _, text in bot.schedule:
            if token in text:
                raise TokenCollision(f"token {token!r} already appears in a script")

    # The partition is a pure seeded function, so computing it up front tells
    # us which bot will land in the origin room once the session starts.
    participants = [
        Participant(id=bot.bot_id, display_name=bot.name, kind=ParticipantKind.BOT)
        for bot in bots
    ]
    rooms = _topology.partition_participants(
        participants, config.group_size_target, seed
    )
    seeder_id = rooms[origin_room].member_ids[0]
    seed_text = f"I suggest we consider {token}"
    seed_at = min(1000, interval // 2)  # strictly inside tick window 0
    bots = [
        replace(bot, schedule=((seed_at, seed_text),)) if bot.bot_id == seeder_id else bot
        for bot in bots
    ]

    log = run_experiment(config, bots, arm="csi", seed=seed, session_id=f"probe-{seed}")

    arrivals: dict[int, int] = {}

    def record(room_id: int, at_ms: int) -> None:
        tick = at_ms // interval
        if room_id not in arrivals:
            arrivals[room_id] = tick

    for event in log:
        if event.kind == "message_posted":
            message = event.payload["message"]
            if token in message["text"]:
                record(message["room_id"], event.at_ms)
        elif event.kind == "relay_fired":
            for injection in event.payload["injections"]:
                if token in injection["text"]:
                    record(injection["room_id"], event.at_ms)
    return PropagationProbe(token=token, origin_room=origin_room, arrival_ticks=arrivals)


# ----------------------------------------------------------------------
# Scenario files
# ----------------------------------------------------------------------


def scenario_to_dict(config: SessionConfig, bots: Sequence[BotScript]) -> dict:
    return {"config": config.to_dict(), "bots": [bot.to_dict() for bot in bots]}


def scenario_from_dict(data: dict) -> tuple[SessionConfig, list[BotScript]]:
    config = SessionConfig.from_dict(data["config"])
    bots = [BotScript.from_dict(record) for record in data["bots"]]
    return config, bots


def save_scenario(path: Union[str, Path], config: SessionConfig, bots: Sequence[BotScript]) -> None:
    Path(path).write_text(
        json.dumps(scenario_to_dict(config, bots), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_scenario(path: Union[str, Path]) -> tuple[SessionConfig, list[BotScript]]:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


# Phrase bank for synthetic deliberation chatter.  Texts are chosen so the
# rule classifier lands them in the intended category.
_PHRASES = {
    "suggestion": (
        "I suggest option {x}",
        "let's go with option {x}",
        "we should take option {x}",
        "I propose option {x}",
        "try option {x} first",
    ),
    "question": (
        "what about option {x}?",
        "why not option {x}?",
        "does option {x} hold up?",
        "is option {x} safe enough?",
        "could option {x} backfire?",
        "how about option {x}",
    ),
    "agreement": (
        "I agree with option {x}",
        "yes, option {x} works for me",
        "+1 for option {x}",
        "good idea, option {x} it is",
        "exactly my read on option {x}",
    ),
    "disagreement": (
        "I disagree with option {x}",
        "no, option {x} feels off",
        "I don't think option {x} works",
        "option {x} looks wrong to me",
        "option {x} is a bad idea",
    ),
    "explanation": (
        "because option {x} covers the downside",
        "since option {x} is cheaper to run",
        "the reason option {x} fails is scope",
        "option {x} first, so that we keep momentum",
        "therefore option {x} dominates",
    ),
    "other": (
        "hmm",
        "let me look at this again",
        "one sec",
        "interesting",
        "ok noted",
    ),
}

_CATEGORY_WEIGHTS = {
    "suggestion": 0.22,
    "question": 0.18,
    "agreement": 0.18,
    "disagreement": 0.12,
    "explanation": 0.15,
    "other": 0.15,
}

_OPTIONS = ("A", "B", "C", "D")


def make_pilot_scenario(
    question_text: str,
    n_bots: int = 25,
    seed: int = 0,
    config: Optional[SessionConfig] = None,
) -> tuple[SessionConfig, list[BotScript]]:
    """Synthesize a pilot-shaped scenario: n bots chatting for five minutes.

    Posting times and texts are drawn from a seeded generator, so the same
    (question, n_bots, seed) always yields the same scenario.  Every bot
    submits a final answer drawn from a small option set.
    """
    config = config or SessionConfig(question_text=question_text, rng_seed=seed)
    if config.question_text != question_text:
        config = replace(config, question_text=question_text)
    rng = np.random.Generator(np.random.PCG64(seed_to_u64(seed)))
    categories = list(_PHRASES)
    weights = np.array([_CATEGORY_WEIGHTS[c] for c in categories])
    weights = weights / weights.sum()
    bots = []
    for i in range(n_bots):
        posts = []
        at = int(rng.integers(3_000, 25_000))
        while at < config.time_limit_ms - 2_000:
            category = categories[int(rng.choice(len(categories), p=weights))]
            template = _PHRASES[category][int(rng.integers(len(_PHRASES[category])))]
            option = _OPTIONS[int(rng.integers(len(_OPTIONS)))]
            posts.append((at, template.format(x=option)))
            at += int(rng.integers(20_000, 60_000))
        answer = f"Option {_OPTIONS[int(rng.integers(len(_OPTIONS)))]}"
        bots.append(
            BotScript(
                bot_id=f"bot{i:02d}",
                schedule=tuple(posts),
                answer=answer,
                display_name=f"Bot {i:02d}",
            )
        )
    return config, bots
