# src/sandi/adapters/state_store_file.py
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from ..contracts import AppError, Severity, SourceSystem, StorageError

log = logging.getLogger(__name__)

SNAPSHOT_VERSION = 1


@dataclass
class LoadedState:
    snapshot: Optional[Dict[str, Any]]
    events: List[Dict[str, Any]] = field(default_factory=list)


class FileStateStore:
    """Append-only event log + atomically replaced full snapshot (v1).

    Storage layout:
      <data_dir>/snapshot.json   full state as of event `seq`
      <data_dir>/events.jsonl    accepted events, one JSON object per line, seq increasing

    Events with seq <= snapshot.seq are already folded into the snapshot and are skipped
    on load, so a crash between snapshot replace and log truncation is harmless.
    """

    def __init__(self, data_dir: Path, *, fsync: bool = True) -> None:
        self.data_dir = Path(data_dir)
        self.snapshot_path = self.data_dir / "snapshot.json"
        self.events_path = self.data_dir / "events.jsonl"
        self._fsync = fsync
        self._fh: Any = None

    # -----------------------------
    # Read side
    # -----------------------------

    def load(self) -> Tuple[LoadedState, List[AppError]]:
        errors: List[AppError] = []
        snapshot: Optional[Dict[str, Any]] = None

        if self.snapshot_path.exists():
            try:
                snapshot = json.loads(self.snapshot_path.read_text(encoding="utf-8"))
            except (OSError, ValueError) as e:
                # a snapshot is only ever replaced whole, so this is real corruption
                raise StorageError(
                    "snapshot is unreadable", path=str(self.snapshot_path), error=repr(e)
                ) from e
            if snapshot.get("version") != SNAPSHOT_VERSION:
                raise StorageError(
                    f"unsupported snapshot version {snapshot.get('version')!r}",
                    path=str(self.snapshot_path),
                )

        base_seq = int(snapshot["seq"]) if snapshot else 0
        events: List[Dict[str, Any]] = []
        if self.events_path.exists():
            raw_lines = self.events_path.read_bytes().split(b"\n")
            for lineno, raw in enumerate(raw_lines, start=1):
                if not raw.strip():
                    continue
                try:
                    ev = json.loads(raw)
                except ValueError:
                    is_tail = all(not rest.strip() for rest in raw_lines[lineno:])
                    if not is_tail:
                        raise StorageError(
                            "corrupt event in the middle of the log",
                            path=str(self.events_path),
                            line=str(lineno),
                        ) from None
                    # torn write from a crash: the event was never acknowledged
                    errors.append(
                        AppError(
                            code="STATE_TORN_TAIL",
                            source=SourceSystem.STORAGE,
                            severity=Severity.WARNING,
                            message="Discarded a partially written last event.",
                            details={"path": str(self.events_path), "line": str(lineno)},
                        )
                    )
                    break
                if int(ev["seq"]) > base_seq:
                    events.append(ev)

        return LoadedState(snapshot=snapshot, events=events), errors

    # -----------------------------
    # Write side
    # -----------------------------

    def _open_log(self) -> Any:
        if self._fh is None:
            self.data_dir.mkdir(parents=True, exist_ok=True)
            self._fh = self.events_path.open("ab")
        return self._fh

    def append(self, event: Dict[str, Any]) -> None:
        line = json.dumps(event, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n"
        try:
            fh = self._open_log()
            fh.write(line)
            fh.flush()
            if self._fsync:
                os.fsync(fh.fileno())
        except OSError as e:
            raise StorageError("failed to append event", error=repr(e)) from e

    def write_snapshot(self, state: Dict[str, Any]) -> None:
        payload = dict(state, version=SNAPSHOT_VERSION)
        data = json.dumps(payload, sort_keys=True, indent=1).encode("utf-8")
        tmp = self.snapshot_path.with_suffix(".json.tmp")
        try:
            self.data_dir.mkdir(parents=True, exist_ok=True)
            with tmp.open("wb") as f:
                f.write(data)
                f.flush()
                if self._fsync:
                    os.fsync(f.fileno())
            tmp.replace(self.snapshot_path)
            if self._fsync:
                _fsync_dir(self.data_dir)
        except OSError as e:
            raise StorageError("failed to write snapshot", error=repr(e)) from e

        # everything in the log is now covered by the snapshot
        try:
            self.close()
            self.events_path.write_bytes(b"")
        except OSError as e:
            log.warning("could not truncate event log after snapshot: %r", e)

    def dump_all(self) -> bytes:
        """Raw bytes of every file in the data dir (state inspection)."""
        chunks: List[bytes] = []
        for path in sorted(self.data_dir.rglob("*")):
            if path.is_file():
                chunks.append(path.read_bytes())
        return b"\n".join(chunks)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def _fsync_dir(path: Path) -> None:
    try:
        fd = os.open(path, os.O_RDONLY)
    except OSError:
        return
    try:
        os.fsync(fd)
    except OSError:
        pass
    finally:
        os.close(fd)
