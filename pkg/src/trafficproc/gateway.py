"""ANPR detection to exBPAF event ETL.

Each detection is looked up against the vehicle's last known junction; when a
road section joins the two junctions, the traversal is emitted as an
OPEN_RUNNING / CLOSED_COMPLETED pair stamped with the two sighting times.
"""

from __future__ import annotations

import datetime as dt
import enum
import itertools
import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, NamedTuple, TextIO
from zoneinfo import ZoneInfo

from .events import CLOSED, OPEN, CorrelationKey, ExBpafEvent
from .network import RoadNetwork

__all__ = [
    "Detection",
    "TrajectoryEntry",
    "Rejection",
    "RejectReason",
    "AnprGateway",
    "parse_detection",
    "format_detection",
    "read_detections",
    "format_rejection",
    "DEFAULT_TTL_MS",
]

log = logging.getLogger(__name__)

DEFAULT_TTL_MS = 30 * 60 * 1000
_DAY_MS = 86_400_000
_EPOCH = dt.date(1970, 1, 1)


class Detection(NamedTuple):
    plate: str
    timestamp: int
    area_id: str
    camera_id: str


class RejectReason(str, enum.Enum):
    NO_SECTION = "NO_SECTION"
    NON_MONOTONIC = "NON_MONOTONIC"
    UNKNOWN_CAMERA = "UNKNOWN_CAMERA"
    POISONED = "POISONED"


class Rejection(NamedTuple):
    timestamp: int
    plate: str
    journey_date: dt.date | None
    reason: RejectReason


@dataclass
class TrajectoryEntry:
    key: CorrelationKey
    last_junction: str
    last_seen: int
    observed_sections: list[str] = field(default_factory=list)
    poisoned: bool = False


def parse_detection(line: str) -> Detection:
    parts = line.strip().split(",")
    if len(parts) != 4:
        raise ValueError(f"detection needs 4 fields: {line!r}")
    plate, ts, area, camera = (p.strip() for p in parts)
    if not plate:
        raise ValueError("detection plate is empty")
    return Detection(plate, int(ts), area, camera)


def format_detection(d: Detection) -> str:
    return f"{d.plate},{d.timestamp},{d.area_id},{d.camera_id}"


def read_detections(stream: TextIO | Iterable[str]) -> Iterator[Detection]:
    """Detections from any line source: a file, ``socket.makefile()``, a list."""
    for line in stream:
        if line.strip() and not line.startswith("#"):
            yield parse_detection(line)


def format_rejection(r: Rejection) -> str:
    date = r.journey_date.isoformat() if r.journey_date else ""
    return f"{r.timestamp},{r.plate},{date},{r.reason.value}"


class AnprGateway:
    """Per-node ETL stage with a trajectory cache.

    Args:
        network: road network the node's cameras sit on.
        server_id: source system id stamped on events; prefixes event ids.
        tz: zone in which journey dates are taken.
        max_skew_ms: when set together with ``clock``, detections further
            than this from the clock are dropped.
        on_evict: called with each key removed by eviction.
    """

    def __init__(
        self,
        network: RoadNetwork,
        server_id: str = "ANPR-0",
        *,
        tz: str = "UTC",
        max_skew_ms: int | None = None,
        clock: Callable[[], int] | None = None,
        on_evict: Callable[[CorrelationKey], None] | None = None,
    ):
        self.network = network
        self.server_id = server_id
        self.max_skew_ms = max_skew_ms
        self.clock = clock
        self.on_evict = on_evict
        self._tz = None if tz in ("UTC", "Etc/UTC") else ZoneInfo(tz)
        self._date_cache: dict[int, dt.date] = {}
        self._cache: dict[CorrelationKey, TrajectoryEntry] = {}
        self._plate_key: dict[str, CorrelationKey] = {}
        self._counter = itertools.count(1)
        self._lock = threading.Lock()
        self.dropped_unknown_camera = 0
        self.dropped_skew = 0
        self.rejections: list[Rejection] = []

    def journey_date(self, ts_ms: int) -> dt.date:
        if self._tz is None:
            return _EPOCH + dt.timedelta(days=ts_ms // _DAY_MS)
        bucket = ts_ms // 900_000
        date = self._date_cache.get(bucket)
        if date is None:
            date = dt.datetime.fromtimestamp(bucket * 900, self._tz).date()
            self._date_cache[bucket] = date
        return date

    def __len__(self) -> int:
        return len(self._cache)

    def entry(self, key: CorrelationKey) -> TrajectoryEntry | None:
        return self._cache.get(key)

    def _reject(self, d: Detection, date, reason: RejectReason) -> Rejection:
        r = Rejection(d.timestamp, d.plate, date, reason)
        self.rejections.append(r)
        return r

    def ingest(self, d: Detection) -> tuple[list[ExBpafEvent], Rejection | None]:
        if d.camera_id not in self.network.junctions:
            self.dropped_unknown_camera += 1
            return [], self._reject(d, None, RejectReason.UNKNOWN_CAMERA)
        if self.max_skew_ms is not None and self.clock is not None:
            if abs(self.clock() - d.timestamp) > self.max_skew_ms:
                self.dropped_skew += 1
                return [], None

        date = self.journey_date(d.timestamp)
        key = CorrelationKey(d.plate, date)
        with self._lock:
            entry = self._cache.get(key)
            if entry is None:
                rejection = None
                prior = self._plate_key.get(d.plate)
                if prior is not None and prior.journey_date < date:
                    old = self._cache.get(prior)
                    if old is not None and not old.poisoned:
                        # The traversal straddling midnight cannot be attributed.
                        rejection = self._reject(d, date, RejectReason.NON_MONOTONIC)
                self._cache[key] = TrajectoryEntry(key, d.camera_id, d.timestamp)
                self._plate_key[d.plate] = key
                return [], rejection

            if d.timestamp <= entry.last_seen:
                return [], self._reject(d, date, RejectReason.NON_MONOTONIC)
            if entry.poisoned:
                entry.last_seen = d.timestamp
                entry.last_junction = d.camera_id
                return [], self._reject(d, date, RejectReason.POISONED)

            section_id = self.network.section_between(entry.last_junction, d.camera_id)
            if section_id is None:
                entry.poisoned = True
                entry.last_seen = d.timestamp
                entry.last_junction = d.camera_id
                return [], self._reject(d, date, RejectReason.NO_SECTION)

            entry_time = entry.last_seen
            entry.last_seen = d.timestamp
            entry.last_junction = d.camera_id
            entry.observed_sections.append(section_id)

        section = self.network.sections[section_id]
        date_s = date.isoformat()
        pid = f"{d.plate}:{date_s}"
        aid = f"{pid}:{section_id}:{entry_time}"
        name = section.description or section_id
        counter = self._counter
        opened = ExBpafEvent(
            f"{self.server_id}-{next(counter)}", entry_time, self.server_id, "", pid, "",
            section_id, aid, name, OPEN, None, key,
        )
        closed = ExBpafEvent(
            f"{self.server_id}-{next(counter)}", d.timestamp, self.server_id, "", pid, "",
            section_id, aid, name, CLOSED, OPEN, key,
        )
        return [opened, closed], None

    def evict_stale_trajectories(self, now: int, ttl: int = DEFAULT_TTL_MS) -> int:
        """Drop entries idle for longer than ``ttl`` ms; returns how many."""
        if ttl <= 0:
            raise ValueError("ttl must be positive")
        with self._lock:
            stale = [k for k, e in self._cache.items() if now - e.last_seen > ttl]
            for k in stale:
                del self._cache[k]
                if self._plate_key.get(k.registration) == k:
                    del self._plate_key[k.registration]
        if self.on_evict is not None:
            for k in stale:
                self.on_evict(k)
        return len(stale)
