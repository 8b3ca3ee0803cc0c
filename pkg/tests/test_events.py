from datetime import datetime, timezone

from upop.events import EventLog, jsonable, read_jsonl

T = datetime(2021, 1, 1, tzinfo=timezone.utc)


def test_jsonable():
    assert jsonable({b"\x01": [b"\xff", T, {2, 1}]}) == {"01": ["ff", T.isoformat(), [1, 2]]}


def test_kind_filter():
    log = EventLog(kinds={"mint"})
    log.append(T, 1, b"c", "mint", {"delta": 1})
    log.append(T, 1, b"c", "attest", {})
    assert len(log) == 1 and log.wants("mint") and not log.wants("attest")
    assert EventLog().wants("anything")


def test_jsonl_roundtrip(tmp_path):
    log = EventLog()
    log.append(T, None, None, "burn", {"account": b"\x00", "delta": -5})
    log.append(T, 2, b"\xab", "mint", {"account": b"\x01", "delta": 5})
    log.write_jsonl(tmp_path / "e.jsonl")
    assert read_jsonl(tmp_path / "e.jsonl") == log.to_records()
    assert read_jsonl(tmp_path / "e.jsonl")[1]["currency"] == "ab"
    assert [e.kind for e in log.of_kind("mint")] == ["mint"]
