"""Append-only event feed and operation record exports."""

import json

from laccolith_range.manager import RangeManager
from laccolith_range.persistence import EventLog, export_json, load_operations


def test_emit_assigns_dense_sequence(tmp_path):
    log = EventLog(tmp_path / "events.jsonl")
    for i in range(5):
        log.emit("tick", {"i": i})
    assert [e["seq"] for e in log.all()] == [0, 1, 2, 3, 4]
    assert log.next_seq == 5


def test_since_cursor(tmp_path):
    log = EventLog(tmp_path / "events.jsonl")
    for i in range(4):
        log.emit("tick", {"i": i})
    assert [e["seq"] for e in log.since(2)] == [2, 3]
    assert log.since(99) == []


def test_replay_round_trips(tmp_path):
    path = tmp_path / "events.jsonl"
    log = EventLog(path)
    emitted = [log.emit("tick", {"i": i}) for i in range(10)]
    assert EventLog.replay(path) == emitted


def test_replay_skips_corrupt_middle_line(tmp_path, caplog):
    path = tmp_path / "events.jsonl"
    log = EventLog(path)
    emitted = [log.emit("tick", {"i": i}) for i in range(3)]
    lines = path.read_text().splitlines()
    lines[1] = '{"seq": 1, "broken'
    path.write_text("\n".join(lines) + "\n")
    with caplog.at_level("WARNING"):
        events = EventLog.replay(path)
    assert events == [emitted[0], emitted[2]]
    assert "corrupt" in caplog.text


def test_replay_tolerates_truncated_tail(tmp_path):
    path = tmp_path / "events.jsonl"
    log = EventLog(path)
    emitted = [log.emit("tick", {"i": i}) for i in range(4)]
    raw = path.read_text()
    path.write_text(raw[: len(raw) - 12])  # chop the final record mid-way
    assert EventLog.replay(path) == emitted[:3]


def test_export_json_writes_sorted_document(tmp_path):
    target = tmp_path / "deep" / "doc.json"
    export_json(target, {"b": 1, "a": 2})
    assert json.loads(target.read_text()) == {"a": 2, "b": 1}


def test_load_operations_orders_numerically(tmp_path):
    ops = tmp_path / "operations"
    for op_id in ("op10", "op2", "op1"):
        export_json(ops / f"{op_id}.json", {"id": op_id})
    assert [d["id"] for d in load_operations(tmp_path)] == ["op1", "op2", "op10"]


def test_load_operations_missing_dir(tmp_path):
    assert load_operations(tmp_path / "nowhere") == []


def test_two_operations_share_one_feed_and_reload_cleanly(tmp_path):
    """Both campaign records must survive a disk round trip even though
    their events interleave in the single append-only feed."""
    mgr = RangeManager(data_dir=tmp_path)
    first = mgr.run_operation("thief", av_name="defender-like")
    second = mgr.run_operation("op-2", av_name="kaspersky-like")
    in_memory = {op.id: op.to_dict() for op in (first, second)}
    mgr.shutdown()

    replayed = EventLog.replay(tmp_path / "events.jsonl")
    by_op = {}
    for event in replayed:
        op_id = event["data"].get("operation") or event["data"].get("id")
        if event["kind"].startswith(("operation.", "fact.", "detection.")) and op_id:
            by_op.setdefault(op_id, []).append(event)
    assert set(by_op) == {"op1", "op2"}
    spans = {
        op_id: (events[0]["seq"], events[-1]["seq"])
        for op_id, events in by_op.items()
    }
    assert spans["op1"][1] > spans["op1"][0]
    assert spans["op2"][0] > spans["op1"][0]

    loaded = {doc["id"]: doc for doc in load_operations(tmp_path)}
    assert loaded == in_memory


def test_exports_match_live_records(tmp_path):
    mgr = RangeManager(data_dir=tmp_path)
    op = mgr.run_operation("ransomware", av_name="avast-like")
    mgr.shutdown()
    (doc,) = load_operations(tmp_path)
    assert doc == op.to_dict()
    assert doc["progress"]["exact"] == "5/5"
