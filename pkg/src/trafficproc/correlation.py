"""Correlate exBPAF events into per-vehicle journey instances.

Every event costs one read of the latest event for its correlation key and one
append to the store. In-flight instances are also cached in memory so that a
completed activity can be measured from the cached stream without touching
the store.
"""

from __future__ import annotations

import bisect
import enum
import logging
import threading
import time
from array import array
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

from .events import CLOSED, OPEN, CorrelationKey, ExBpafEvent
from .metrics import MetricSample, MetricsEngine
from .network import JourneyDefinition, NetworkError, RoadNetwork
from .store import EventStore

__all__ = [
    "InstanceStatus",
    "JourneyInstance",
    "CorrelationResult",
    "CorrelationEngine",
    "UnknownInstance",
    "LatencyRecorder",
]

log = logging.getLogger(__name__)

STRICT = "strict"
DISCOVERY = "discovery"


class InstanceStatus(str, enum.Enum):
    IN_FLIGHT = "IN_FLIGHT"
    COMPLETED = "COMPLETED"
    DISCARDED = "DISCARDED"


class UnknownInstance(KeyError):
    pass


class CorrelationResult(NamedTuple):
    instance_id: str
    predecessor_found: bool


@dataclass
class JourneyInstance:
    process_instance_id: str
    correlation: CorrelationKey
    events: list[ExBpafEvent] = field(default_factory=list)
    matched_definition: str | None = None
    status: InstanceStatus = InstanceStatus.IN_FLIGHT
    samples: list[MetricSample] = field(default_factory=list)
    last_activity: int = 0
    poisoned: bool = False

    @property
    def path(self) -> list[str]:
        return [s.section_id for s in self.samples]


@dataclass
class LatencyRecorder:
    """Nanosecond timings of the store read, store write and metric step.

    ``total`` covers a whole correlate call: one read, one write and, for
    closing events, the metric update.
    """

    read: array = field(default_factory=lambda: array("q"))
    write: array = field(default_factory=lambda: array("q"))
    metric: array = field(default_factory=lambda: array("q"))
    total: array = field(default_factory=lambda: array("q"))


class CorrelationEngine:
    def __init__(
        self,
        network: RoadNetwork,
        store: EventStore | None = None,
        metrics: MetricsEngine | None = None,
        *,
        mode: str = STRICT,
        on_finalized: Callable[[JourneyInstance], None] | None = None,
    ):
        if mode not in (STRICT, DISCOVERY):
            raise ValueError(f"mode must be {STRICT!r} or {DISCOVERY!r}")
        self.network = network
        self.store = store if store is not None else EventStore()
        self.metrics = metrics if metrics is not None else MetricsEngine(network)
        self.mode = mode
        self.on_finalized = on_finalized
        self.timer: LatencyRecorder | None = None
        self._cache: dict[str, JourneyInstance] = {}
        self.outcomes: dict[str, tuple[InstanceStatus, str | None]] = {}
        self.dropped_samples = 0
        self.duplicates = 0
        self._auto_ids = 0
        self._lock = threading.RLock()

    # -- correlation ----------------------------------------------------

    def correlate(self, e: ExBpafEvent) -> CorrelationResult:
        pid = e.process_instance_id or str(e.correlation)
        with self._lock:
            store = self.store
            if e.event_id in store:
                self.duplicates += 1
                return CorrelationResult(pid, True)
            timer = self.timer
            if timer is None:
                predecessor = store.latest(e.correlation)
                store.append(e)
            else:
                t0 = time.perf_counter_ns()
                t_start = t0
                predecessor = store.latest(e.correlation)
                t1 = time.perf_counter_ns()
                store.append(e)
                t2 = time.perf_counter_ns()
                timer.read.append(t1 - t0)
                timer.write.append(t2 - t1)

            inst = self._cache.get(pid)
            if inst is None:
                inst = self._cache[pid] = JourneyInstance(pid, e.correlation, last_activity=e.timestamp)
            events = inst.events
            if not events or events[-1].timestamp <= e.timestamp:
                events.append(e)
            else:
                bisect.insort_right(events, e, key=lambda ev: ev.timestamp)
            if e.timestamp > inst.last_activity:
                inst.last_activity = e.timestamp

            if e.current_state is OPEN:
                self.metrics.note_entry(e.activity_definition_id, e.timestamp)
            elif e.current_state is CLOSED:
                try:
                    sample = self.on_activity_completed(pid, e.activity_instance_id)
                except UnknownInstance:
                    sample = None
                if sample is not None:
                    self._maybe_finish(inst)
            if timer is not None:
                timer.total.append(time.perf_counter_ns() - t_start)
        return CorrelationResult(pid, predecessor is not None)

    def on_activity_completed(self, instance_id: str, activity_instance_id: str) -> MetricSample | None:
        timer = self.timer
        t0 = time.perf_counter_ns() if timer is not None else 0
        inst = self._cache.get(instance_id)
        if inst is None:
            self.dropped_samples += 1
            raise UnknownInstance(f"unknown instance {instance_id}")
        opened = closed = None
        for ev in reversed(inst.events):
            if ev.activity_instance_id == activity_instance_id:
                if ev.current_state is CLOSED and closed is None:
                    closed = ev
                elif ev.current_state is OPEN:
                    opened = ev
                    break
        if opened is None or closed is None:
            inst.poisoned = True
            self.dropped_samples += 1
            return None
        sample = self.metrics.make_sample(
            closed.activity_definition_id, instance_id, activity_instance_id, opened.timestamp, closed.timestamp
        )
        self.metrics.add_sample(sample)
        inst.samples.append(sample)
        if timer is not None:
            timer.metric.append(time.perf_counter_ns() - t0)
        return sample

    def _maybe_finish(self, inst: JourneyInstance) -> None:
        if inst.poisoned:
            return
        result = self.network.match_path(inst.path)
        # A full match that another definition extends waits for idleness.
        if result.full is not None and not result.prefix:
            self._finalize(inst, InstanceStatus.COMPLETED, result.full)

    # -- finalization ---------------------------------------------------

    def _finalize(self, inst: JourneyInstance, status: InstanceStatus, definition: str | None) -> None:
        inst.status = status
        inst.matched_definition = definition
        del self._cache[inst.process_instance_id]
        self.outcomes[inst.process_instance_id] = (status, definition)
        if status is InstanceStatus.COMPLETED:
            name = self.network.journeys[definition].name
            inst.events = [ev._replace(process_definition_id=definition, process_name=name) for ev in inst.events]
            self.metrics.complete_journey(inst.process_instance_id, definition, inst.samples)
        if self.on_finalized is not None:
            self.on_finalized(inst)

    def _decide(self, inst: JourneyInstance) -> tuple[InstanceStatus, str | None]:
        if inst.poisoned or not inst.samples:
            return InstanceStatus.DISCARDED, None
        result = self.network.match_path(inst.path)
        if result.full is not None:
            return InstanceStatus.COMPLETED, result.full
        if self.mode == STRICT:
            return InstanceStatus.DISCARDED, None
        self._auto_ids += 1
        new_id = f"AUTO{self._auto_ids:04d}"
        while new_id in self.network.journeys:
            self._auto_ids += 1
            new_id = f"AUTO{self._auto_ids:04d}"
        try:
            self.network.register_journey(JourneyDefinition(new_id, f"discovered {new_id}", tuple(inst.path)))
        except NetworkError as exc:
            log.info("cannot register discovered path for %s: %s", inst.process_instance_id, exc)
            return InstanceStatus.DISCARDED, None
        return InstanceStatus.COMPLETED, new_id

    def finalize_instance(self, instance_id: str) -> tuple[str, InstanceStatus] | None:
        with self._lock:
            inst = self._cache.get(instance_id)
            if inst is None:
                return None
            status, definition = self._decide(inst)
            self._finalize(inst, status, definition)
            return instance_id, status

    def finalize_idle(self, now: int, ttl: int) -> list[tuple[str, InstanceStatus]]:
        if ttl <= 0:
            raise ValueError("ttl must be positive")
        with self._lock:
            idle = sorted(pid for pid, inst in self._cache.items() if now - inst.last_activity > ttl)
            return [self.finalize_instance(pid) for pid in idle]

    def finalize_all(self) -> list[tuple[str, InstanceStatus]]:
        with self._lock:
            return [self.finalize_instance(pid) for pid in sorted(self._cache)]

    # -- reads ------------------------------------------------------------

    def read_stream(self, instance_id: str) -> list[ExBpafEvent]:
        try:
            return self.store.read_instance(instance_id)
        except KeyError:
            raise UnknownInstance(f"unknown instance {instance_id}") from None

    def cached_instance(self, instance_id: str) -> JourneyInstance | None:
        return self._cache.get(instance_id)

    def in_flight(self) -> list[str]:
        return sorted(self._cache)
