"""Relay agents: distill a room's new dialog and voice it next door.

Each room has one observing agent.  On every synchronized tick the agent
collects the messages it has not yet covered, distills them (deterministic
extractive selection by default, a remote completion service optionally), and
posts the distillation into the neighboring room in first person.  Windows are
collected against a pre-tick snapshot, so content crosses exactly one ring
edge per tick — that single rule gives the hop-distance propagation bound.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import requests

from .core import Message, ParticipantKind, Session
from .errors import ServiceUnavailable
from .metrics import Category, Lexicon, classify, default_lexicon
from .topology import Room

SUMMARY_PREFIX = "From my other discussion group: "
SUMMARY_MAX_CHARS = 500

# Salience order for extractive selection; recency breaks ties.
_SALIENCE = {
    Category.SUGGESTION: 0,
    Category.QUESTION: 1,
    Category.DISAGREEMENT: 2,
    Category.EXPLANATION: 3,
    Category.AGREEMENT: 4,
    Category.OTHER: 5,
}

REMOTE_INSTRUCTION = (
    "You are one member of a discussion group, relaying what another group "
    "just said. In first person and at most {max_chars} characters, restate "
    "the most salient suggestions, questions, and arguments from this "
    "excerpt:\n\n{transcript}"
)


@dataclass(frozen=True)
class TranscriptWindow:
    """The messages of one room strictly after a checkpoint, in seq order."""

    room_id: int
    from_seq: int
    messages: tuple[Message, ...]

    def __post_init__(self):
        expected = self.from_seq + 1
        for message in self.messages:
            if message.seq != expected:
                raise ValueError(
                    f"window for room {self.room_id} is not contiguous from "
                    f"seq {self.from_seq}"
                )
            expected += 1


@dataclass(frozen=True)
class Summary:
    """A distillation of a window, capped at 500 characters."""

    source_room: int
    text: str
    covered_through_seq: int
    item_count: int

    def __post_init__(self):
        if len(self.text) > SUMMARY_MAX_CHARS:
            raise ValueError(f"summary exceeds {SUMMARY_MAX_CHARS} characters")
        if not self.text:
            raise ValueError("empty summaries are represented by absence, not text")


def collect_window(room: Room, checkpoint_seq: int) -> TranscriptWindow:
    """Everything in the room's log with seq > checkpoint_seq."""
    if checkpoint_seq < 0:
        raise ValueError("checkpoint_seq must be >= 0")
    messages = tuple(m for m in room.log if m.seq > checkpoint_seq)
    return TranscriptWindow(room_id=room.id, from_seq=checkpoint_seq, messages=messages)


def extract_summary(
    window: TranscriptWindow,
    max_items: int,
    already_relayed: Iterable[str] = (),
    lexicon: Optional[Lexicon] = None,
) -> Optional[tuple[Summary, list[str]]]:
    """Extractive distillation, returning the summary and the items it used.

    Ranks messages suggestion > question > disagreement > explanation >
    agreement > other (recency first within a rank), skips texts this agent
    has already relayed, and joins up to ``max_items`` of them under the fixed
    first-person prefix.  Returns None for an empty or fully deduplicated
    window; the join never exceeds the 500-character cap (a lone oversized
    item is truncated to fit).
    """
    if max_items < 1:
        raise ValueError("max_items must be >= 1")
    if not window.messages:
        return None
    lexicon = lexicon or default_lexicon()
    ranked = sorted(
        window.messages,
        key=lambda m: (_SALIENCE[classify(m.text, lexicon)], -m.seq),
    )
    seen = set(already_relayed)
    selected: list[str] = []
    for message in ranked:
        if len(selected) >= max_items:
            break
        text = message.text.strip()
        if text in seen:
            continue
        seen.add(text)
        selected.append(text)
    if not selected:
        return None
    summary_text = SUMMARY_PREFIX
    used: list[str] = []
    for text in selected:
        candidate = summary_text + text if not used else summary_text + "; " + text
        if len(candidate) > SUMMARY_MAX_CHARS:
            break
        summary_text = candidate
        used.append(text)
    if not used:
        summary_text = (SUMMARY_PREFIX + selected[0])[:SUMMARY_MAX_CHARS]
        used = [selected[0]]
    summary = Summary(
        source_room=window.room_id,
        text=summary_text,
        covered_through_seq=window.messages[-1].seq,
        item_count=len(used),
    )
    return summary, used


def summarize_extractive(
    window: TranscriptWindow,
    max_items: int,
    already_relayed: Iterable[str] = (),
    lexicon: Optional[Lexicon] = None,
) -> Optional[Summary]:
    """Deterministic extractive distillation of a window (see extract_summary)."""
    result = extract_summary(window, max_items, already_relayed, lexicon)
    return None if result is None else result[0]


@dataclass
class CompletionService:
    """Handle for the remote completion endpoint.

    POSTs ``{"prompt": ..., "max_chars": ...}`` (plus ``"model"`` when one is
    configured) and expects ``{"text": ...}`` back.  Configure via arguments
    or the CSI_COMPLETION_URL / CSI_COMPLETION_KEY / CSI_COMPLETION_MODEL
    environment variables.
    """

    url: str
    api_key: Optional[str] = None
    model: Optional[str] = None
    timeout_ms: int = 10_000

    @classmethod
    def from_env(cls) -> "CompletionService":
        url = os.environ.get("CSI_COMPLETION_URL")
        if not url:
            raise ServiceUnavailable("CSI_COMPLETION_URL is not set")
        return cls(
            url=url,
            api_key=os.environ.get("CSI_COMPLETION_KEY"),
            model=os.environ.get("CSI_COMPLETION_MODEL"),
        )

    def complete(self, prompt: str, max_chars: int) -> str:
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {"prompt": prompt, "max_chars": max_chars}
        if self.model:
            body["model"] = self.model
        response = requests.post(
            self.url,
            json=body,
            headers=headers,
            timeout=self.timeout_ms / 1000.0,
        )
        response.raise_for_status()
        payload = response.json()
        text = payload.get("text")
        if not isinstance(text, str):
            raise ValueError("completion response is missing a 'text' string")
        return text


def summarize_remote(
    window: TranscriptWindow,
    service: CompletionService,
    max_items: int = 3,
    already_relayed: Iterable[str] = (),
    lexicon: Optional[Lexicon] = None,
) -> tuple[Optional[Summary], bool]:
    """Distill a window via the completion service, falling back to
    extractive on timeout or malformed response.

    Returns (summary, fell_back).  Raises ServiceUnavailable only when the
    remote call failed AND the extractive fallback produced nothing.
    """
    if not window.messages:
        return None, False
    transcript = "\n".join(f"{m.author_id}: {m.text}" for m in window.messages)
    prompt = REMOTE_INSTRUCTION.format(max_chars=SUMMARY_MAX_CHARS, transcript=transcript)
    try:
        text = service.complete(prompt, SUMMARY_MAX_CHARS).strip()
        if not text:
            raise ValueError("completion returned empty text")
        summary = Summary(
            source_room=window.room_id,
            text=text[:SUMMARY_MAX_CHARS],
            covered_through_seq=window.messages[-1].seq,
            item_count=1,
        )
        return summary, False
    except (requests.RequestException, ValueError, KeyError):
        fallback = summarize_extractive(window, max_items, already_relayed, lexicon)
        if fallback is None:
            raise ServiceUnavailable(
                "remote completion failed and extractive fallback produced nothing"
            )
        return fallback, True


@dataclass
class RelayAgent:
    """Per-agent relay state: its ring edge, checkpoint, and dedup memory."""

    participant_id: str
    source_room: int
    target_room: int
    checkpoint_seq: int = 0
    relayed_texts: set[str] = field(default_factory=set)
    posted_summaries: set[str] = field(default_factory=set)


def _default_id_factory() -> Callable[[], str]:
    counter = itertools.count(1)
    return lambda: f"relay{next(counter):05d}"


def relay_tick(
    session: Session,
    agents: dict[int, RelayAgent],
    now_ms: int,
    lexicon: Optional[Lexicon] = None,
    service: Optional[CompletionService] = None,
    make_id: Optional[Callable[[], str]] = None,
) -> tuple[list[Message], list[int]]:
    """Run one synchronized relay pass over every ring edge.

    Windows are collected against the pre-tick logs, then injections are
    appended in ascending source-room order, so a tick moves content exactly
    one hop.  An agent whose produced summary text repeats one it already
    posted stays silent (echo suppression).  Returns the injected messages
    and the source rooms whose remote summarization fell back to extractive.

    A ServiceUnavailable from the remote path (remote dead and nothing left
    to extract) silences that edge for this tick rather than aborting the
    others; the skip shows up in the fallback list.
    """
    if session.topology is None or session.topology.k < 2:
        return [], []
    lexicon = lexicon or default_lexicon()
    make_id = make_id or _default_id_factory()
    rooms = {room.id: room for room in session.rooms}
    remote_wanted = session.config.summarizer_backend == "remote_completion"
    max_items = session.config.summary_max_items

    produced: list[tuple[RelayAgent, Summary, list[str]]] = []
    fallbacks: list[int] = []
    for source, _target in sorted(session.topology.edges):
        agent = agents[source]
        window = collect_window(rooms[source], agent.checkpoint_seq)
        summary: Optional[Summary] = None
        items: list[str] = []
        fell_back = False
        if remote_wanted and service is not None:
            try:
                summary, fell_back = summarize_remote(
                    window, service, max_items, agent.relayed_texts, lexicon
                )
            except ServiceUnavailable:
                summary, fell_back = None, True
        else:
            extracted = extract_summary(window, max_items, agent.relayed_texts, lexicon)
            if extracted is not None:
                summary, items = extracted
                # remote configured but no service handle: extractive stood in
                fell_back = remote_wanted
        if fell_back:
            fallbacks.append(source)
        if summary is not None:
            produced.append((agent, summary, items))

    injected: list[Message] = []
    for agent, summary, items in produced:
        agent.checkpoint_seq = summary.covered_through_seq
        if summary.text in agent.posted_summaries:
            continue
        agent.posted_summaries.add(summary.text)
        agent.relayed_texts.add(summary.text)
        agent.relayed_texts.update(items)
        target = rooms[agent.target_room]
        message = Message(
            id=make_id(),
            room_id=target.id,
            author_id=agent.participant_id,
            author_kind=ParticipantKind.AGENT,
            text=summary.text,
            seq=target.next_seq,
            timestamp_ms=now_ms,
            relayed_from=agent.source_room,
        )
        target.append(message)
        injected.append(message)
    return injected, fallbacks
