from __future__ import annotations

import json
from pathlib import Path

import pytest

from sandi.adapters.state_store_file import SNAPSHOT_VERSION, FileStateStore
from sandi.contracts import StorageError


def ev(seq: int, kind: str = "report") -> dict:
    return {"type": kind, "seq": seq, "sender_id": "00" * 16, "com": f"{seq:064x}", "epoch": 0}


def test_empty_dir_loads_nothing(tmp_path: Path):
    loaded, warnings = FileStateStore(tmp_path / "s").load()
    assert loaded.snapshot is None
    assert loaded.events == []
    assert warnings == []


def test_append_then_load(tmp_path: Path):
    store = FileStateStore(tmp_path, fsync=False)
    for i in range(1, 4):
        store.append(ev(i))
    store.close()
    loaded, _ = FileStateStore(tmp_path).load()
    assert [e["seq"] for e in loaded.events] == [1, 2, 3]


def test_snapshot_truncates_log_and_skips_old_events(tmp_path: Path):
    store = FileStateStore(tmp_path, fsync=False)
    store.append(ev(1))
    store.append(ev(2))
    store.write_snapshot({"seq": 2, "accounts": []})
    assert store.events_path.read_bytes() == b""
    store.append(ev(3))
    store.close()

    loaded, _ = FileStateStore(tmp_path).load()
    assert loaded.snapshot is not None
    assert loaded.snapshot["version"] == SNAPSHOT_VERSION
    assert [e["seq"] for e in loaded.events] == [3]


def test_events_already_in_snapshot_are_ignored(tmp_path: Path):
    # crash between snapshot replace and log truncation
    store = FileStateStore(tmp_path, fsync=False)
    store.append(ev(1))
    store.append(ev(2))
    store.close()
    (tmp_path / "snapshot.json").write_text(
        json.dumps({"seq": 2, "version": SNAPSHOT_VERSION}), encoding="utf-8"
    )
    loaded, _ = FileStateStore(tmp_path).load()
    assert loaded.events == []


def test_torn_tail_is_dropped_with_warning(tmp_path: Path):
    store = FileStateStore(tmp_path, fsync=False)
    store.append(ev(1))
    store.close()
    with (tmp_path / "events.jsonl").open("ab") as f:
        f.write(b'{"type":"report","seq":2,"sen')

    loaded, warnings = FileStateStore(tmp_path).load()
    assert [e["seq"] for e in loaded.events] == [1]
    assert [w.code for w in warnings] == ["STATE_TORN_TAIL"]


def test_corruption_mid_log_is_fatal(tmp_path: Path):
    (tmp_path / "events.jsonl").write_bytes(
        json.dumps(ev(1)).encode() + b"\n{garbage\n" + json.dumps(ev(3)).encode() + b"\n"
    )
    with pytest.raises(StorageError):
        FileStateStore(tmp_path).load()


def test_unsupported_snapshot_version(tmp_path: Path):
    (tmp_path / "snapshot.json").write_text('{"seq": 0, "version": 99}', encoding="utf-8")
    with pytest.raises(StorageError):
        FileStateStore(tmp_path).load()


def test_dump_all_covers_every_file(tmp_path: Path):
    store = FileStateStore(tmp_path, fsync=False)
    store.write_snapshot({"seq": 0, "marker": "in-snapshot"})
    store.append(ev(1))
    store.close()
    dump = store.dump_all()
    assert b"in-snapshot" in dump
    assert f"{1:064x}".encode() in dump
