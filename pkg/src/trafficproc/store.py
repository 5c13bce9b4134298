"""Embedded append-only event store.

The log is a file of wire-format lines (or a list, for a memory store). Two
in-memory indexes sit beside it: the latest event per correlation key and the
log references of every process instance. Both are rebuilt by scanning the
log on open.
"""

from __future__ import annotations

import os
import threading
from pathlib import Path
from typing import Iterator

from .events import CorrelationKey, ExBpafEvent, decode, encode

__all__ = ["EventStore", "StoreError", "FORMAT_VERSION"]

FORMAT_VERSION = "1"


class StoreError(RuntimeError):
    pass


class EventStore:
    def __init__(self, directory: str | Path | None = None, *, node_id: str = "", area_id: str = ""):
        self.directory = Path(directory) if directory is not None else None
        self.node_id = node_id
        self.area_id = area_id
        self.latest_index: dict[CorrelationKey, ExBpafEvent] = {}
        self.instance_index: dict[str, list] = {}
        self._event_ids: set[str] = set()
        self._lock = threading.Lock()
        self.reads = 0
        self.writes = 0
        self._lines: list[str] | None = None
        self._fh = None
        self._offset = 0
        if self.directory is None:
            self._lines = []
        else:
            self._open_dir()

    # -- lifecycle ----------------------------------------------------------

    def _open_dir(self) -> None:
        d = self.directory
        d.mkdir(parents=True, exist_ok=True)
        manifest = d / "manifest"
        if manifest.exists():
            meta = dict(
                line.split("=", 1) for line in manifest.read_text(encoding="utf-8").splitlines() if "=" in line
            )
            if meta.get("format_version") != FORMAT_VERSION:
                raise StoreError(f"{d}: unsupported store format {meta.get('format_version')!r}")
            self.node_id = self.node_id or meta.get("node_id", "")
            self.area_id = self.area_id or meta.get("area_id", "")
        else:
            manifest.write_text(
                f"node_id={self.node_id}\narea_id={self.area_id}\nformat_version={FORMAT_VERSION}\n",
                encoding="utf-8",
            )
        log_path = d / "events.log"
        if log_path.exists():
            self._recover(log_path)
        # Read access too: instance reads pread records back by offset.
        self._fh = open(log_path, "a+b")
        self._offset = self._fh.tell()

    def _recover(self, log_path: Path) -> None:
        offset = 0
        with open(log_path, "rb") as fh:
            for raw in fh:
                n = len(raw)
                if raw.endswith(b"\n"):
                    event = decode(raw.decode("utf-8"))
                    self._index(event, (offset, n))
                    offset += n
                else:
                    # Torn final write: truncate back to the last whole record.
                    break
        if offset != log_path.stat().st_size:
            with open(log_path, "r+b") as fh:
                fh.truncate(offset)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def flush(self) -> None:
        if self._fh is not None:
            self._fh.flush()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- operations -----------------------------------------------------------

    def _index(self, event: ExBpafEvent, ref) -> None:
        self._event_ids.add(event.event_id)
        self.latest_index[event.correlation] = event
        refs = self.instance_index.get(event.process_instance_id)
        if refs is None:
            self.instance_index[event.process_instance_id] = [ref]
        else:
            refs.append(ref)

    def __contains__(self, event_id: str) -> bool:
        return event_id in self._event_ids

    def __len__(self) -> int:
        return len(self._event_ids)

    def latest(self, key: CorrelationKey) -> ExBpafEvent | None:
        """The single indexed read: the most recent event for ``key``."""
        self.reads += 1
        return self.latest_index.get(key)

    def append(self, event: ExBpafEvent) -> None:
        """The single write: append to the log and update both indexes."""
        line = encode(event) + "\n"
        with self._lock:
            if self._lines is not None:
                ref = len(self._lines)
                self._lines.append(line)
            else:
                data = line.encode("utf-8")
                ref = (self._offset, len(data))
                if self._fh is None:
                    raise StoreError("append to a closed store")
                try:
                    self._fh.write(data)
                except (OSError, ValueError) as exc:
                    raise StoreError(f"append failed: {exc}") from exc
                self._offset += len(data)
            self._index(event, ref)
            self.writes += 1

    def _read_ref(self, ref) -> str:
        if self._lines is not None:
            return self._lines[ref]
        offset, n = ref
        self._fh.flush()
        return os.pread(self._fh.fileno(), n, offset).decode("utf-8")

    def read_instance(self, process_instance_id: str) -> list[ExBpafEvent]:
        refs = self.instance_index.get(process_instance_id)
        if refs is None:
            raise KeyError(f"unknown instance {process_instance_id}")
        events = [decode(self._read_ref(r)) for r in refs]
        # Timestamp order; arrival order breaks ties (sort is stable).
        events.sort(key=lambda e: e.timestamp)
        return events

    def lines(self) -> Iterator[str]:
        """Raw log lines in append order."""
        if self._lines is not None:
            yield from self._lines
            return
        self.flush()
        with open(self.directory / "events.log", "r", encoding="utf-8") as fh:
            yield from fh

    def events(self) -> Iterator[ExBpafEvent]:
        for line in self.lines():
            yield decode(line)

    def contents(self) -> str:
        return "".join(self.lines())
