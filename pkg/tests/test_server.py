import json

import pytest

from csi.core import ParticipantKind, SessionConfig, SessionState
from csi.errors import (
    CorruptLog,
    EmptyText,
    InvalidConfig,
    NotActive,
    NotMember,
)
from csi.events import EventLog
from csi.server import (
    CommandSchedule,
    KLASS_POST,
    SessionRuntime,
    VirtualScheduler,
    WallScheduler,
    replay,
    run_clock,
    schedule_session_clock,
)
from csi.wire import AssignedFrame, ClosedFrame, MessageFrame, QuestionFrame


def fresh_runtime(n_bots=10, arm="csi", **config_kwargs) -> SessionRuntime:
    config = SessionConfig(question_text="pick", **config_kwargs)
    runtime = SessionRuntime.create(config, session_id="t1", arm=arm)
    for i in range(n_bots):
        runtime.join(f"Bot {i}", ParticipantKind.BOT, participant_id=f"b{i:02d}")
    return runtime


class TestCreateAndJoin:
    def test_create_in_lobby_with_created_event(self):
        runtime = SessionRuntime.create(SessionConfig(question_text="q"), session_id="s")
        assert runtime.session.state is SessionState.LOBBY
        assert runtime.session.participants == {}
        assert [e.kind for e in runtime.log] == ["session_created"]

    def test_invalid_config_rejected_at_construction(self):
        with pytest.raises(InvalidConfig) as info:
            SessionConfig(group_size_target=1)
        assert "group_size_target" in str(info.value)

    def test_pilot_timing_accepted(self):
        config = SessionConfig(relay_interval_ms=60_000, time_limit_ms=300_000)
        assert config.relay_interval_ms == 60_000

    def test_join_after_start_refused(self):
        runtime = fresh_runtime(4)
        runtime.start()
        with pytest.raises(NotActive):
            runtime.join("Late", ParticipantKind.HUMAN)

    def test_duplicate_id_refused(self):
        runtime = fresh_runtime(1)
        with pytest.raises(ValueError):
            runtime.join("Again", ParticipantKind.BOT, participant_id="b00")


class TestStartDeliveries:
    def test_everyone_gets_assigned_and_question(self):
        runtime = fresh_runtime(10)
        deliveries = runtime.start()
        by_pid = {}
        for pid, frame in deliveries:
            by_pid.setdefault(pid, []).append(frame)
        assert set(by_pid) == {f"b{i:02d}" for i in range(10)}
        for pid, frames in by_pid.items():
            assert isinstance(frames[0], AssignedFrame)
            assert isinstance(frames[1], QuestionFrame)
            assert frames[1].deadline_ms == 300_000
            member_ids = [m.id for m in frames[0].members]
            assert pid in member_ids


class TestPost:
    def test_post_assigns_next_seq_and_fans_out_to_room_only(self):
        runtime = fresh_runtime(10)
        runtime.start()
        room = runtime.session.rooms[0]
        author = room.member_ids[0]
        message, deliveries = runtime.post(author, "I agree", 1000)
        assert message.seq == 1
        assert message.room_id == room.id
        assert {pid for pid, _ in deliveries} == set(room.member_ids)
        frame = deliveries[0][1]
        assert isinstance(frame, MessageFrame)
        assert frame.relayed_from is None

    def test_cross_room_post_refused(self):
        runtime = fresh_runtime(10)
        runtime.start()
        rooms = runtime.session.rooms
        author = rooms[0].member_ids[0]
        with pytest.raises(NotMember):
            runtime.post(author, "hello", 0, room_id=rooms[1].id)

    def test_unknown_participant_refused(self):
        runtime = fresh_runtime(4)
        runtime.start()
        with pytest.raises(NotMember):
            runtime.post("stranger", "hello", 0)

    def test_whitespace_text_refused(self):
        runtime = fresh_runtime(4)
        runtime.start()
        author = runtime.session.rooms[0].member_ids[0]
        with pytest.raises(EmptyText):
            runtime.post(author, "   ", 0)

    def test_post_before_start_refused(self):
        runtime = fresh_runtime(4)
        with pytest.raises(NotActive):
            runtime.post("b00", "early", 0)

    def test_agent_cannot_use_post(self):
        runtime = fresh_runtime(10)
        runtime.start()
        agent_id = runtime.session.rooms[0].agent_id
        with pytest.raises(NotMember):
            runtime.post(agent_id, "hi", 0)

    def test_per_room_total_order(self):
        runtime = fresh_runtime(10)
        runtime.start()
        room = runtime.session.rooms[0]
        for i, author in enumerate(room.member_ids * 3):
            runtime.post(author, f"msg {i}", 100 * i)
        assert [m.seq for m in room.log] == list(range(1, len(room.log) + 1))


class TestAnswers:
    def test_last_answer_per_room_wins(self):
        runtime = fresh_runtime(10)
        runtime.start()
        room = runtime.session.rooms[0]
        runtime.submit_answer(room.member_ids[0], "first", 1000)
        runtime.submit_answer(room.member_ids[1], "second", 2000)
        assert runtime.session.final_answers[room.id] == "second"

    def test_answers_allowed_while_closing(self):
        runtime = fresh_runtime(10)
        runtime.start()
        runtime.begin_closing(300_000)
        room = runtime.session.rooms[0]
        runtime.submit_answer(room.member_ids[0], "late", 310_000)
        assert runtime.session.final_answers[room.id] == "late"

    def test_answers_refused_after_close(self):
        runtime = fresh_runtime(10)
        runtime.start()
        runtime.begin_closing(300_000)
        runtime.close(330_000)
        with pytest.raises(NotActive):
            runtime.submit_answer(runtime.session.rooms[0].member_ids[0], "x", 340_000)

    def test_close_delivers_plurality(self):
        runtime = fresh_runtime(10)
        runtime.start()
        for room in runtime.session.rooms:
            runtime.submit_answer(room.member_ids[0], "Qf6", 1000)
        runtime.begin_closing(300_000)
        deliveries = runtime.close(330_000)
        assert runtime.session.aggregate_answer == "Qf6"
        assert all(isinstance(f, ClosedFrame) and f.final == "Qf6" for _, f in deliveries)
        assert {pid for pid, _ in deliveries} == {f"b{i:02d}" for i in range(10)}


class TestRunClock:
    def test_tick_times_inside_pilot_window(self):
        runtime = fresh_runtime(25)
        runtime.start()
        log = run_clock(runtime)
        ticks = [e for e in log if e.kind == "relay_fired"]
        assert [e.at_ms for e in ticks] == [60_000, 120_000, 180_000, 240_000]
        assert [e.payload["tick"] for e in ticks] == [1, 2, 3, 4]
        closing = next(e for e in log if e.kind == "session_closing")
        closed = next(e for e in log if e.kind == "session_closed")
        assert closing.at_ms == 300_000
        assert closed.at_ms == 330_000

    def test_zero_answers_closes_with_no_answers(self):
        runtime = fresh_runtime(10)
        runtime.start()
        log = run_clock(runtime)
        closed = next(e for e in log if e.kind == "session_closed")
        assert closed.payload["no_answers"] is True
        assert closed.payload["aggregate_answer"] is None
        assert runtime.session.state is SessionState.CLOSED

    def test_control_arm_emits_no_relay_events(self):
        runtime = fresh_runtime(10, arm="control")
        runtime.start()
        assert len(runtime.session.rooms) == 1
        log = run_clock(runtime)
        assert [e for e in log if e.kind == "relay_fired"] == []

    def test_wall_and_virtual_clocks_yield_identical_logs(self):
        def build():
            runtime = fresh_runtime(
                6, relay_interval_ms=50, time_limit_ms=200, answer_grace_ms=30
            )
            runtime.start()
            schedule = CommandSchedule()
            room = runtime.session.rooms[0]
            author = room.member_ids[0]
            for i, at in enumerate((10, 60, 110)):
                schedule.push(
                    at,
                    KLASS_POST,
                    lambda at_ms, i=i, a=author: runtime.post(a, f"I suggest plan {i}", at_ms),
                )
            schedule_session_clock(runtime, schedule)
            return runtime, schedule

        vr, vs = build()
        VirtualScheduler().run(vs)
        wr, ws = build()
        WallScheduler(time_scale=20.0).run(ws)
        assert vr.log.dumps() == wr.log.dumps()

    def test_dense_posting_keeps_exact_schedule(self):
        # 25 bots across 5 rooms posting every 2 s: every event lands at its
        # scheduled instant under the virtual clock (no drift, no reordering)
        runtime = fresh_runtime(25)
        runtime.start()
        schedule = CommandSchedule()
        bots = [p.id for p in runtime.session.humans_and_bots()]
        expected_posts = []
        for t in range(2_000, 300_000, 2_000):
            author = bots[(t // 2_000) % len(bots)]
            expected_posts.append(t)
            schedule.push(
                t, KLASS_POST, lambda at_ms, a=author: runtime.post(a, "tick tock", at_ms)
            )
        schedule_session_clock(runtime, schedule)
        VirtualScheduler().run(schedule)
        posted = [e.at_ms for e in runtime.log if e.kind == "message_posted"]
        assert posted == expected_posts
        for event in runtime.log:
            if event.kind == "message_posted":
                assert event.payload["message"]["timestamp_ms"] == event.at_ms


class TestReplay:
    def full_log(self) -> tuple[SessionRuntime, EventLog]:
        runtime = fresh_runtime(10)
        runtime.start()
        room = runtime.session.rooms[0]
        runtime.post(room.member_ids[0], "I suggest Qf6", 5_000)
        runtime.relay_tick(60_000, 1)
        runtime.submit_answer(room.member_ids[0], "Qf6", 70_000)
        runtime.begin_closing(300_000)
        runtime.close(330_000)
        return runtime, runtime.log

    def test_replay_matches_live_terminal_session(self):
        runtime, log = self.full_log()
        assert replay(log) == runtime.session

    def test_replay_is_idempotent(self):
        _, log = self.full_log()
        assert replay(log) == replay(log)

    def test_replay_from_file(self, tmp_path):
        runtime, log = self.full_log()
        path = tmp_path / "x.events.jsonl"
        log.dump(path)
        assert replay(str(path)) == runtime.session

    def test_empty_log_is_corrupt(self):
        with pytest.raises(CorruptLog):
            replay(EventLog())

    def test_gap_is_corrupt_and_named(self):
        _, log = self.full_log()
        broken = [e for e in log if e.seq_global != 3]
        with pytest.raises(CorruptLog) as info:
            replay(broken)
        assert info.value.seq_global == 4

    def test_message_seq_gap_detected(self, tmp_path):
        runtime, log = self.full_log()
        lines = log.dumps().splitlines()
        doctored = []
        for line in lines:
            record = json.loads(line)
            if record["kind"] == "message_posted":
                record["payload"]["message"]["seq"] = 40
            doctored.append(json.dumps(record, sort_keys=True, separators=(",", ":")))
        with pytest.raises(CorruptLog) as info:
            replay(EventLog.loads("\n".join(doctored)))
        assert "seq" in str(info.value)

    def test_events_out_of_phase_detected(self):
        runtime = fresh_runtime(4)
        log = runtime.log
        # fabricate a post before session_started
        log.append(0, "message_posted", {"message": {
            "id": "m1", "room_id": 0, "author_id": "b00", "author_kind": "bot",
            "text": "early", "seq": 1, "timestamp_ms": 0, "relayed_from": None,
        }})
        with pytest.raises(CorruptLog) as info:
            replay(log)
        assert info.value.seq_global == log.events[-1].seq_global


class TestIsolation:
    def test_only_agent_relays_cross_rooms(self):
        runtime = fresh_runtime(25)
        runtime.start()
        # post in every room, then tick
        for room in runtime.session.rooms:
            runtime.post(room.member_ids[0], f"I suggest plan {room.id}", 1_000)
        _, deliveries = runtime.relay_tick(60_000, 1)
        member_rooms = {
            pid: room.id
            for room in runtime.session.rooms
            for pid in room.member_ids
        }
        for pid, frame in deliveries:
            assert isinstance(frame, MessageFrame)
            # delivered only to members of the frame's room
            assert member_rooms[pid] == frame.room
            # and the only cross-room channel is the relay itself
            assert frame.author_kind == "agent"
            assert frame.relayed_from is not None
