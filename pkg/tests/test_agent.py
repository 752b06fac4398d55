import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csi.agent import (
    SUMMARY_MAX_CHARS,
    SUMMARY_PREFIX,
    CompletionService,
    RelayAgent,
    Summary,
    TranscriptWindow,
    collect_window,
    relay_tick,
    summarize_extractive,
    summarize_remote,
)
from csi.core import (
    Message,
    Participant,
    ParticipantKind,
    Session,
    SessionConfig,
    SessionState,
    advance_state,
)
from csi.errors import ServiceUnavailable
from csi.topology import Room


def bot_msg(room, seq, text, author="b0", at=0):
    return Message(f"m{room}-{seq}", room, author, ParticipantKind.BOT, text, seq, at)


def window_of(texts, room=0, from_seq=0):
    messages = tuple(
        bot_msg(room, from_seq + i + 1, text) for i, text in enumerate(texts)
    )
    return TranscriptWindow(room_id=room, from_seq=from_seq, messages=messages)


class TestCollectWindow:
    def room_with(self, n):
        room = Room(id=0, member_ids=["b0"])
        for seq in range(1, n + 1):
            room.append(bot_msg(0, seq, f"text {seq}"))
        return room

    def test_returns_tail_after_checkpoint(self):
        window = collect_window(self.room_with(7), 4)
        assert [m.seq for m in window.messages] == [5, 6, 7]

    def test_caught_up_window_is_empty(self):
        assert collect_window(self.room_with(7), 7).messages == ()

    def test_zero_checkpoint_returns_whole_log(self):
        assert len(collect_window(self.room_with(3), 0).messages) == 3

    def test_negative_checkpoint_rejected(self):
        with pytest.raises(ValueError):
            collect_window(self.room_with(1), -1)


class TestSummarizeExtractive:
    def test_salience_ranking_example(self):
        window = window_of(
            ["Qf6 wins the queen", "I suggest Qf6", "what about Rd8?"]
        )
        summary = summarize_extractive(window, max_items=2)
        assert summary is not None
        assert summary.text == "From my other discussion group: I suggest Qf6; what about Rd8?"
        assert summary.item_count == 2
        assert summary.covered_through_seq == 3

    def test_empty_window_gives_no_summary(self):
        window = TranscriptWindow(room_id=0, from_seq=0, messages=())
        assert summarize_extractive(window, max_items=3) is None

    def test_fully_deduplicated_window_gives_no_summary(self):
        window = window_of(["I suggest Qf6"])
        assert summarize_extractive(window, 3, already_relayed={"I suggest Qf6"}) is None

    def test_recency_breaks_ties_within_rank(self):
        window = window_of(["I suggest Qf6", "I suggest Rd8"])
        summary = summarize_extractive(window, max_items=1)
        assert summary.text == SUMMARY_PREFIX + "I suggest Rd8"

    def test_duplicate_texts_in_window_collapse(self):
        window = window_of(["ZEBRA", "ZEBRA", "ZEBRA"])
        summary = summarize_extractive(window, max_items=3)
        assert summary.text == SUMMARY_PREFIX + "ZEBRA"
        assert summary.item_count == 1

    def test_covers_whole_window_even_when_items_dropped(self):
        window = window_of([f"filler {i}" for i in range(10)])
        summary = summarize_extractive(window, max_items=2)
        assert summary.covered_through_seq == 10

    def test_oversized_single_item_truncated_to_cap(self):
        window = window_of(["x" * 900])
        summary = summarize_extractive(window, max_items=3)
        assert len(summary.text) == SUMMARY_MAX_CHARS
        assert summary.item_count == 1

    @given(
        st.lists(st.text(alphabet="abcdefg hij?", min_size=1, max_size=300), min_size=1, max_size=8),
        st.integers(min_value=1, max_value=5),
    )
    @settings(max_examples=150, deadline=None)
    def test_cap_always_respected(self, texts, max_items):
        texts = [t for t in texts if t.strip()]
        if not texts:
            return
        summary = summarize_extractive(window_of(texts), max_items)
        if summary is not None:
            assert len(summary.text) <= SUMMARY_MAX_CHARS
            assert 1 <= summary.item_count <= max_items

    def test_summary_type_rejects_oversize(self):
        with pytest.raises(ValueError):
            Summary(source_room=0, text="x" * 501, covered_through_seq=1, item_count=1)


class _StubService:
    """CompletionService stand-in with a scripted reply or failure."""

    def __init__(self, reply=None, error=None):
        self.reply = reply
        self.error = error
        self.prompts = []

    def complete(self, prompt, max_chars):
        self.prompts.append(prompt)
        if self.error is not None:
            raise self.error
        return self.reply


class TestSummarizeRemote:
    def test_healthy_service_summary(self):
        service = _StubService(reply="  I heard the group likes Qf6.  ")
        summary, fell_back = summarize_remote(window_of(["I suggest Qf6"]), service)
        assert not fell_back
        assert summary.text == "I heard the group likes Qf6."
        assert summary.covered_through_seq == 1
        assert "I suggest Qf6" in service.prompts[0]

    def test_timeout_falls_back_to_extractive(self):
        import requests

        service = _StubService(error=requests.Timeout("boom"))
        summary, fell_back = summarize_remote(window_of(["I suggest Qf6"]), service)
        assert fell_back
        assert summary.text == SUMMARY_PREFIX + "I suggest Qf6"

    def test_empty_window_makes_no_call(self):
        service = _StubService(reply="unused")
        window = TranscriptWindow(room_id=0, from_seq=0, messages=())
        assert summarize_remote(window, service) == (None, False)
        assert service.prompts == []

    def test_both_paths_empty_raises_service_unavailable(self):
        import requests

        service = _StubService(error=requests.ConnectionError("down"))
        window = window_of(["I suggest Qf6"])
        with pytest.raises(ServiceUnavailable):
            summarize_remote(window, service, already_relayed={"I suggest Qf6"})

    def test_oversized_reply_clamped(self):
        service = _StubService(reply="y" * 800)
        summary, _ = summarize_remote(window_of(["hello there"]), service)
        assert len(summary.text) == SUMMARY_MAX_CHARS

    def test_http_round_trip_against_local_endpoint(self):
        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers["Content-Length"])
                body = json.loads(self.rfile.read(length))
                assert body["max_chars"] == SUMMARY_MAX_CHARS
                reply = json.dumps({"text": "Concise relay of: " + body["prompt"][:40]})
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.end_headers()
                self.wfile.write(reply.encode("utf-8"))

            def log_message(self, *args):
                pass

        httpd = HTTPServer(("127.0.0.1", 0), Handler)
        thread = threading.Thread(target=httpd.serve_forever, daemon=True)
        thread.start()
        try:
            service = CompletionService(
                url=f"http://127.0.0.1:{httpd.server_port}/complete", timeout_ms=5000
            )
            summary, fell_back = summarize_remote(window_of(["I suggest Qf6"]), service)
            assert not fell_back
            assert summary.text.startswith("Concise relay of:")
        finally:
            httpd.shutdown()

    def test_from_env(self, monkeypatch):
        monkeypatch.setenv("CSI_COMPLETION_URL", "http://example.invalid/v1")
        monkeypatch.setenv("CSI_COMPLETION_KEY", "sekrit")
        monkeypatch.setenv("CSI_COMPLETION_MODEL", "latest-chat")
        service = CompletionService.from_env()
        assert service.url == "http://example.invalid/v1"
        assert service.api_key == "sekrit"
        assert service.model == "latest-chat"
        monkeypatch.delenv("CSI_COMPLETION_URL")
        with pytest.raises(ServiceUnavailable):
            CompletionService.from_env()

    def test_model_included_in_request_when_configured(self):
        captured = {}

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers["Content-Length"])
                captured.update(json.loads(self.rfile.read(length)))
                captured["auth"] = self.headers.get("Authorization")
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.end_headers()
                self.wfile.write(b'{"text": "ok"}')

            def log_message(self, *args):
                pass

        httpd = HTTPServer(("127.0.0.1", 0), Handler)
        threading.Thread(target=httpd.serve_forever, daemon=True).start()
        try:
            service = CompletionService(
                url=f"http://127.0.0.1:{httpd.server_port}/c",
                api_key="k1",
                model="latest-chat",
            )
            service.complete("prompt text", 500)
            assert captured["model"] == "latest-chat"
            assert captured["max_chars"] == 500
            assert captured["auth"] == "Bearer k1"
        finally:
            httpd.shutdown()

    def test_malformed_response_falls_back(self):
        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.end_headers()
                self.wfile.write(b'{"nope": 1}')

            def log_message(self, *args):
                pass

        httpd = HTTPServer(("127.0.0.1", 0), Handler)
        threading.Thread(target=httpd.serve_forever, daemon=True).start()
        try:
            service = CompletionService(
                url=f"http://127.0.0.1:{httpd.server_port}/complete", timeout_ms=5000
            )
            summary, fell_back = summarize_remote(window_of(["I suggest Qf6"]), service)
            assert fell_back
            assert summary.text == SUMMARY_PREFIX + "I suggest Qf6"
        finally:
            httpd.shutdown()


def active_session(k=5, per_room=2):
    """An Active session with k rooms and per_room scripted bots in each."""
    config = SessionConfig(question_text="q", group_size_target=max(2, per_room))
    session = Session(id="s", config=config)
    n = k * per_room
    for i in range(n):
        p = Participant(id=f"b{i:02d}", display_name=f"B{i}", kind=ParticipantKind.BOT)
        session.participants[p.id] = p
    advance_state(session, SessionState.ACTIVE)
    assert len(session.rooms) == k
    agents = {}
    if session.topology.k >= 2:
        from csi.topology import relay_target

        for room in session.rooms:
            agents[room.id] = RelayAgent(
                participant_id=room.agent_id,
                source_room=room.id,
                target_room=relay_target(session.topology, room.id),
            )
    return session, agents


def post(session, room_id, text, seq=None):
    room = session.rooms[room_id]
    author = room.member_ids[0]
    message = Message(
        f"m{room_id}-{room.next_seq}",
        room_id,
        author,
        ParticipantKind.BOT,
        text,
        room.next_seq,
        0,
    )
    room.append(message)
    return message


class TestRelayTick:
    def test_single_edge_propagation(self):
        session, agents = active_session(k=5)
        post(session, 0, "I suggest we consider ZEBRA")
        injected, fallbacks = relay_tick(session, agents, 60_000)
        assert fallbacks == []
        assert len(injected) == 1
        message = injected[0]
        assert message.room_id == 1
        assert message.relayed_from == 0
        assert message.author_kind is ParticipantKind.AGENT
        assert "ZEBRA" in message.text

    def test_quiet_swarm_produces_nothing(self):
        session, agents = active_session(k=5)
        injected, _ = relay_tick(session, agents, 60_000)
        assert injected == []

    def test_single_room_is_noop(self):
        session, agents = active_session(k=1, per_room=5)
        assert relay_tick(session, agents, 60_000) == ([], [])

    def test_no_self_influence(self):
        session, agents = active_session(k=3)
        for room_id in range(3):
            post(session, room_id, f"I suggest plan {room_id}")
        injected, _ = relay_tick(session, agents, 60_000)
        assert len(injected) == 3
        for message in injected:
            assert message.room_id != message.relayed_from

    def test_checkpoint_prevents_resummarizing(self):
        session, agents = active_session(k=2)
        post(session, 0, "I suggest Qf6")
        first, _ = relay_tick(session, agents, 60_000)
        # room 1 starts empty, so only room 0's agent speaks on tick 1
        assert [m.relayed_from for m in first] == [0]
        # second tick with no fresh content in room 0: its agent is silent
        second, _ = relay_tick(session, agents, 120_000)
        from_room_0 = [m for m in second if m.relayed_from == 0]
        assert from_room_0 == []

    def test_snapshot_prevents_multi_hop_within_tick(self):
        session, agents = active_session(k=3)
        post(session, 0, "I suggest we consider ZEBRA")
        injected, _ = relay_tick(session, agents, 60_000)
        rooms_with_token = {m.room_id for m in injected if "ZEBRA" in m.text}
        assert rooms_with_token == {1}  # one hop per tick, not two

    def test_echo_suppression_of_identical_summary(self):
        session, agents = active_session(k=2)
        post(session, 0, "I suggest Qf6")
        relay_tick(session, agents, 60_000)
        # the same text posted again in room 0 would re-extract identically;
        # the dedup keeps the agent silent instead
        post(session, 0, "I suggest Qf6")
        second, _ = relay_tick(session, agents, 120_000)
        assert [m for m in second if m.relayed_from == 0] == []

    def test_injections_ordered_by_source_room(self):
        session, agents = active_session(k=4)
        for room_id in (2, 0, 3):
            post(session, room_id, f"I suggest plan {room_id}")
        injected, _ = relay_tick(session, agents, 60_000)
        assert [m.relayed_from for m in injected] == [0, 2, 3]

    def test_remote_without_service_marks_fallback(self):
        session, agents = active_session(k=2)
        session.config = SessionConfig(
            question_text="q", summarizer_backend="remote_completion"
        )
        post(session, 0, "I suggest Qf6")
        injected, fallbacks = relay_tick(session, agents, 60_000, service=None)
        # extractive stands in for room 0's content; room 1 had nothing to
        # summarize, so nothing fell back there
        assert fallbacks == [0]
        assert len(injected) == 1
