import json

import pytest

from csi.errors import CorruptLog
from csi.events import Event, EventLog, log_file_name


def minimal_log() -> EventLog:
    log = EventLog()
    log.append(0, "session_created", {"session_id": "s", "arm": "csi", "config": {}})
    log.append(0, "participant_joined", {"id": "p0", "display_name": "P", "kind": "bot"})
    log.append(0, "session_started", {"rooms": [], "edges": [], "agents": []})
    return log


class TestAppend:
    def test_seq_global_is_gapless_from_one(self):
        log = minimal_log()
        assert [e.seq_global for e in log] == [1, 2, 3]

    def test_rejects_unknown_kind(self):
        log = EventLog()
        with pytest.raises(ValueError):
            log.append(0, "mystery", {})

    def test_rejects_time_running_backwards(self):
        log = minimal_log()
        log.append(500, "session_closing", {})
        with pytest.raises(ValueError):
            log.append(499, "session_closing", {})


class TestSerialization:
    def test_jsonl_round_trip(self, tmp_path):
        log = minimal_log()
        path = tmp_path / log_file_name("s")
        log.dump(path)
        loaded = EventLog.load(path)
        assert loaded.events == log.events
        assert loaded.dumps() == log.dumps()

    def test_lines_are_canonical_json(self):
        line = minimal_log().events[0].to_json_line()
        record = json.loads(line)
        assert json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False) == line

    def test_one_object_per_line(self):
        text = minimal_log().dumps()
        assert len(text.splitlines()) == 3
        for line in text.splitlines():
            assert set(json.loads(line)) == {"seq_global", "at_ms", "kind", "payload"}


class TestValidation:
    def test_empty_log_rejected(self):
        with pytest.raises(CorruptLog):
            EventLog.loads("")

    def test_gap_names_first_bad_record(self):
        log = minimal_log()
        text = "\n".join(
            e.to_json_line() for e in log.events if e.seq_global != 2
        )
        with pytest.raises(CorruptLog) as info:
            EventLog.loads(text)
        assert info.value.seq_global == 3

    def test_reordered_records_rejected(self):
        log = minimal_log()
        lines = [e.to_json_line() for e in log.events]
        lines[1], lines[2] = lines[2], lines[1]
        with pytest.raises(CorruptLog):
            EventLog.loads("\n".join(lines))

    def test_must_start_with_session_created(self):
        log = EventLog()
        log.append(0, "session_closing", {})
        with pytest.raises(CorruptLog) as info:
            EventLog.loads(log.dumps())
        assert info.value.seq_global == 1

    def test_missing_payload_fields_rejected(self):
        bad = Event(1, 0, "session_created", {"session_id": "s"})
        with pytest.raises(CorruptLog) as info:
            EventLog.loads(bad.to_json_line())
        assert info.value.seq_global == 1

    def test_non_json_line_rejected(self):
        with pytest.raises(CorruptLog):
            EventLog.loads("not json at all\n")

    def test_decreasing_at_ms_rejected_on_load(self):
        lines = [
            Event(1, 100, "session_created", {"session_id": "s", "arm": "csi", "config": {}}).to_json_line(),
            Event(2, 50, "session_closing", {}).to_json_line(),
        ]
        with pytest.raises(CorruptLog) as info:
            EventLog.loads("\n".join(lines))
        assert info.value.seq_global == 2
