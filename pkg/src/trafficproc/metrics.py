"""Time and flow KPIs over fixed wall-aligned windows, plus threshold alerts.

Durations accumulate as integer milliseconds and are converted to seconds only
when queried. Window membership is decided by the entry (OPEN_RUNNING) time
for both time and flow figures.
"""

from __future__ import annotations

import datetime as dt
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, NamedTuple, Sequence

from .network import RoadNetwork

__all__ = [
    "WINDOW_MS",
    "window_start",
    "iso_ms",
    "MetricSample",
    "Threshold",
    "Alert",
    "DefinitionAccumulator",
    "MetricsEngine",
    "load_thresholds",
    "parse_thresholds",
    "format_alert",
]

WINDOW_MS = 15 * 60 * 1000

METRIC_HEADER = "definition_id,window_start_iso,avg_time_s,flow,count"
VECTOR_HEADER = "definition_id,window_start_iso,component_index,section_id,flow"
ALERT_HEADER = "time_iso,target_id,instance_id,observed_s,bound_s"


def window_start(ts_ms: int, length_ms: int = WINDOW_MS) -> int:
    return ts_ms - ts_ms % length_ms


def iso_ms(ts_ms: int) -> str:
    t = dt.datetime.fromtimestamp(ts_ms // 1000, dt.timezone.utc)
    ms = ts_ms % 1000
    base = t.strftime("%Y-%m-%dT%H:%M:%S")
    return f"{base}.{ms:03d}Z" if ms else f"{base}Z"


class MetricSample(NamedTuple):
    section_id: str
    process_instance_id: str
    activity_instance_id: str
    duration_ms: int
    entry_time: int
    window: int

    @property
    def duration_s(self) -> float:
        return self.duration_ms / 1000


class Threshold(NamedTuple):
    target: str
    bound_s: float
    enabled: bool = True


class Alert(NamedTuple):
    time: int
    target: str
    instance_id: str
    observed_s: float
    bound_s: float


def format_alert(a: Alert) -> str:
    return f"{iso_ms(a.time)},{a.target},{a.instance_id},{a.observed_s:.3f},{a.bound_s:g}"


def parse_thresholds(lines: Iterable[str]) -> list[Threshold]:
    out = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith("target_id"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected target_id,bound_s,enabled")
        bound = float(parts[1])
        if bound <= 0:
            raise ValueError(f"line {lineno}: bound must be positive")
        flag = parts[2].lower()
        if flag not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"line {lineno}: bad enabled flag {parts[2]!r}")
        out.append(Threshold(parts[0], bound, flag in ("true", "1", "yes")))
    return out


def load_thresholds(path: str | Path) -> list[Threshold]:
    with open(path, encoding="utf-8") as fh:
        return parse_thresholds(fh)


@dataclass
class DefinitionAccumulator:
    sum_ms: int = 0
    completed_count: int = 0
    entered_count: int = 0
    # Traversals counted for flow; differs from completed_count only for
    # cross-area sections whose time is kept on another node.
    flow_count: int = 0

    @property
    def sum_duration_s(self) -> float:
        return self.sum_ms / 1000

    def average_s(self) -> float | None:
        if self.completed_count == 0:
            return None
        return self.sum_ms / self.completed_count / 1000


class MetricsEngine:
    def __init__(
        self,
        network: RoadNetwork | None = None,
        *,
        window_ms: int = WINDOW_MS,
        thresholds: Sequence[Threshold] = (),
        on_alert: Callable[[Alert], None] | None = None,
    ):
        if window_ms <= 0:
            raise ValueError("window length must be positive")
        self.network = network
        self.window_ms = window_ms
        self.thresholds: dict[str, list[Threshold]] = {}
        for t in thresholds:
            self.thresholds.setdefault(t.target, []).append(t)
        self.on_alert = on_alert
        self.alerts: list[Alert] = []
        self.sample_listeners: list[Callable[[MetricSample], None]] = []
        self._activity: dict[tuple[str, int], DefinitionAccumulator] = {}
        self._journey: dict[tuple[str, int], DefinitionAccumulator] = {}
        self._journey_flow: dict[tuple[str, int], list[int]] = {}
        # instance -> (definition, ((section, duration ms, entry ms), ...))
        self._vectors: dict[str, tuple[str, tuple[tuple[str, int, int], ...]]] = {}
        self._lock = threading.Lock()

    def window(self, ts_ms: int) -> int:
        return ts_ms - ts_ms % self.window_ms

    # -- instance level -------------------------------------------------

    @staticmethod
    def activity_time(sample: MetricSample) -> float:
        return sample.duration_ms / 1000

    @staticmethod
    def activity_flow_unit(sample: MetricSample) -> int:
        return 1

    def make_sample(self, section_id, instance_id, activity_instance_id, opened_ms, closed_ms) -> MetricSample:
        return MetricSample(
            section_id, instance_id, activity_instance_id, closed_ms - opened_ms, opened_ms, self.window(opened_ms)
        )

    # -- updates --------------------------------------------------------

    def note_entry(self, section_id: str, entry_time: int) -> None:
        key = (section_id, self.window(entry_time))
        with self._lock:
            acc = self._activity.get(key)
            if acc is None:
                acc = self._activity[key] = DefinitionAccumulator()
            acc.entered_count += 1

    def add_sample(self, sample: MetricSample, *, count_flow: bool = True) -> list[Alert]:
        if sample.duration_ms <= 0:
            raise ValueError(f"non-positive duration for {sample.activity_instance_id}")
        key = (sample.section_id, sample.window)
        with self._lock:
            acc = self._activity.get(key)
            if acc is None:
                acc = self._activity[key] = DefinitionAccumulator()
            acc.sum_ms += sample.duration_ms
            acc.completed_count += 1
            if count_flow:
                acc.flow_count += 1
        for listener in self.sample_listeners:
            listener(sample)
        if sample.section_id in self.thresholds:
            return self.evaluate_thresholds(
                sample.section_id,
                sample.duration_ms / 1000,
                sample.process_instance_id,
                sample.entry_time + sample.duration_ms,
            )
        return []

    def add_flow(self, section_id: str, entry_time: int) -> None:
        """Count a traversal for flow only; its time lives elsewhere."""
        key = (section_id, self.window(entry_time))
        with self._lock:
            acc = self._activity.get(key)
            if acc is None:
                acc = self._activity[key] = DefinitionAccumulator()
            acc.flow_count += 1
            acc.entered_count += 1

    def complete_journey(
        self, instance_id: str, definition_id: str, samples: Sequence[MetricSample]
    ) -> list[Alert]:
        """Record a finished journey whose samples are in path order."""
        if not samples:
            raise ValueError("a completed journey has at least one traversal")
        total = 0
        for s in samples:
            total += s.duration_ms
        first = samples[0].entry_time
        with self._lock:
            self._vectors[instance_id] = (
                definition_id, tuple((s.section_id, s.duration_ms, s.entry_time) for s in samples)
            )
            key = (definition_id, self.window(first))
            acc = self._journey.get(key)
            if acc is None:
                acc = self._journey[key] = DefinitionAccumulator()
            acc.sum_ms += total
            acc.completed_count += 1
            acc.entered_count += 1
            acc.flow_count += 1
            n = len(samples)
            for idx, s in enumerate(samples):
                fkey = (definition_id, s.window)
                counts = self._journey_flow.get(fkey)
                if counts is None:
                    counts = self._journey_flow[fkey] = [0] * n
                counts[idx] += 1
        if definition_id in self.thresholds:
            return self.evaluate_thresholds(
                definition_id, total / 1000, instance_id, samples[-1].entry_time + samples[-1].duration_ms
            )
        return []

    def evaluate_thresholds(self, target: str, observed_s: float, instance_id: str, time_ms: int) -> list[Alert]:
        out = []
        for t in self.thresholds.get(target, ()):
            if t.enabled and observed_s > t.bound_s:
                alert = Alert(time_ms, target, instance_id, observed_s, t.bound_s)
                out.append(alert)
                self.alerts.append(alert)
                if self.on_alert is not None:
                    self.on_alert(alert)
        return out

    # -- queries --------------------------------------------------------

    def accumulator(self, section_id: str, window: int) -> DefinitionAccumulator | None:
        acc = self._activity.get((section_id, window))
        return None if acc is None else DefinitionAccumulator(**vars(acc))

    def avg_activity_time(self, section_id: str, window: int) -> float | None:
        acc = self._activity.get((section_id, window))
        return None if acc is None else acc.average_s()

    def activity_flow(self, section_id: str, window: int) -> int:
        acc = self._activity.get((section_id, window))
        return 0 if acc is None else acc.flow_count

    def journey_time_vector(self, instance_id: str) -> list[tuple[str, float]]:
        try:
            _, comps = self._vectors[instance_id]
        except KeyError:
            raise KeyError(f"instance not completed: {instance_id}") from None
        return [(sid, ms / 1000) for sid, ms, _ in comps]

    def journey_time_ms(self, instance_id: str) -> int:
        try:
            _, comps = self._vectors[instance_id]
        except KeyError:
            raise KeyError(f"instance not completed: {instance_id}") from None
        return sum(ms for _, ms, _ in comps)

    def journey_flow_unit_vector(self, instance_id: str) -> list[tuple[str, int]]:
        return [(sid, 1) for sid, _ in self.journey_time_vector(instance_id)]

    def journey_definition(self, instance_id: str) -> str | None:
        v = self._vectors.get(instance_id)
        return None if v is None else v[0]

    def journeys(self):
        """(instance, definition, ((section, ms, entry ms), ...)) per completed journey."""
        for pid, (definition, comps) in self._vectors.items():
            yield pid, definition, comps

    def completed_instances(self) -> dict[str, str]:
        """instance id -> matched definition id for every recorded journey."""
        return {pid: v[0] for pid, v in self._vectors.items()}

    def _definition_sections(self, definition_id: str) -> tuple[str, ...]:
        if self.network is None or definition_id not in self.network.journeys:
            raise KeyError(f"unknown definition {definition_id}")
        return self.network.journeys[definition_id].sections

    def journey_flow_vector(self, definition_id: str, window: int) -> list[tuple[str, int]]:
        sections = self._definition_sections(definition_id)
        counts = self._journey_flow.get((definition_id, window))
        if counts is None:
            counts = [0] * len(sections)
        return list(zip(sections, counts))

    def avg_journey_time(self, definition_id: str, window: int) -> float | None:
        self._definition_sections(definition_id)
        acc = self._journey.get((definition_id, window))
        return None if acc is None else acc.average_s()

    def journey_count(self, definition_id: str, window: int) -> int:
        acc = self._journey.get((definition_id, window))
        return 0 if acc is None else acc.completed_count

    # -- tables -----------------------------------------------------------

    def activity_keys(self) -> list[tuple[str, int]]:
        return sorted(self._activity)

    def journey_keys(self) -> list[tuple[str, int]]:
        return sorted(self._journey)

    def metric_rows(self) -> list[str]:
        rows = []
        for table in (self._activity, self._journey):
            for (def_id, w) in sorted(table):
                acc = table[(def_id, w)]
                avg = acc.average_s()
                rows.append(
                    f"{def_id},{iso_ms(w)},{'' if avg is None else f'{avg:.6f}'},"
                    f"{acc.flow_count},{acc.completed_count}"
                )
        return rows

    def vector_rows(self) -> list[str]:
        rows = []
        for (def_id, w) in sorted(self._journey_flow):
            counts = self._journey_flow[(def_id, w)]
            sections = (
                self.network.journeys[def_id].sections
                if self.network is not None and def_id in self.network.journeys
                else ("",) * len(counts)
            )
            for idx, (sid, c) in enumerate(zip(sections, counts)):
                rows.append(f"{def_id},{iso_ms(w)},{idx},{sid},{c}")
        return rows
