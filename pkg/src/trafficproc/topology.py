"""Per-area analytics nodes and the global aggregator.

Each area node (BASU) owns the part of the network inside its area: its own
gateway, correlation engine, metrics and store. Journeys that leave an area
reach the global node (GBAS) as fragments, together with sightings at boundary
junctions, and are stitched back into one journey there.

Messages between nodes are single text lines: a kind token, a space, and a
payload in the detection or event wire format.
"""

from __future__ import annotations

import datetime as dt
import logging
import queue
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .correlation import STRICT, CorrelationEngine, InstanceStatus, JourneyInstance
from .events import CLOSED, OPEN, CorrelationKey, ExBpafEvent, decode, encode
from .gateway import DEFAULT_TTL_MS, AnprGateway, Detection, format_detection, parse_detection
from .metrics import WINDOW_MS, MetricSample, MetricsEngine, Threshold
from .network import JourneyDefinition, RoadNetwork
from .store import EventStore

__all__ = [
    "AreaMap",
    "RoutingError",
    "Backpressure",
    "ChannelClosed",
    "Channel",
    "BasuNode",
    "GbasNode",
    "Cluster",
    "parse_area_map",
    "load_area_map",
    "route_detection",
    "stitch_cross_area",
    "node_id_for",
]

log = logging.getLogger(__name__)

SWEEP_INTERVAL_MS = 60_000


class RoutingError(LookupError):
    pass


class Backpressure(RuntimeError):
    """A bounded channel stayed full past the send timeout."""


class ChannelClosed(RuntimeError):
    pass


@dataclass
class AreaMap:
    areas: set[str] = field(default_factory=set)
    junction_area: dict[str, str] = field(default_factory=dict)

    def area_of(self, junction_id: str) -> str:
        try:
            return self.junction_area[junction_id]
        except KeyError:
            raise RoutingError(f"junction {junction_id} is not mapped to an area") from None

    def violations(self, network: RoadNetwork) -> list[str]:
        out = [f"junction {j} has no area" for j in sorted(network.junctions) if j not in self.junction_area]
        out += [
            f"junction {j} mapped to unknown area {a}"
            for j, a in sorted(self.junction_area.items())
            if a not in self.areas
        ]
        return out

    @classmethod
    def single(cls, network: RoadNetwork, area: str = "ALL") -> AreaMap:
        return cls({area}, {j: area for j in network.junctions})


def parse_area_map(text: str) -> AreaMap:
    amap = AreaMap()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if parts[0] == "A":
            if len(parts) < 2 or not parts[1]:
                raise ValueError(f"line {lineno}: area record needs an id")
            amap.areas.add(parts[1])
        elif parts[0] == "JA":
            if len(parts) < 3:
                raise ValueError(f"line {lineno}: JA record needs junction and area")
            if parts[1] in amap.junction_area and amap.junction_area[parts[1]] != parts[2]:
                raise ValueError(f"line {lineno}: junction {parts[1]} mapped to two areas")
            amap.junction_area[parts[1]] = parts[2]
    return amap


def load_area_map(path: str | Path) -> AreaMap:
    return parse_area_map(Path(path).read_text(encoding="utf-8"))


def node_id_for(area_id: str) -> str:
    return f"BASU-{area_id}"


def route_detection(d: Detection, area_map: AreaMap) -> str:
    return node_id_for(area_map.area_of(d.camera_id))


class Channel:
    """Line-oriented channel into one consumer.

    Synchronous channels call the handler on send. Threaded channels queue
    lines (bounded) and deliver them from a single worker thread in order.
    """

    def __init__(self, handler: Callable[[str], None], *, threaded: bool = False, capacity: int = 10_000,
                 send_timeout: float = 5.0, name: str = "channel"):
        self.handler = handler
        self.threaded = threaded
        self.send_timeout = send_timeout
        self.closed = False
        self.errors: list[BaseException] = []
        if threaded:
            self._q: queue.Queue = queue.Queue(maxsize=capacity)
            self._thread = threading.Thread(target=self._run, name=name, daemon=True)
            self._thread.start()

    def send(self, line: str) -> None:
        if self.closed:
            raise ChannelClosed("channel closed")
        if not self.threaded:
            self.handler(line)
            return
        try:
            self._q.put(line, timeout=self.send_timeout)
        except queue.Full:
            raise Backpressure(f"channel full after {self.send_timeout}s") from None

    def _run(self) -> None:
        while True:
            line = self._q.get()
            try:
                if line is None:
                    return
                self.handler(line)
            except BaseException as exc:  # surfaced by drain()
                self.errors.append(exc)
            finally:
                self._q.task_done()

    def drain(self) -> None:
        if self.threaded:
            self._q.join()
        if self.errors:
            raise self.errors[0]

    def close(self) -> None:
        if self.closed:
            return
        self.closed = True
        if self.threaded:
            self._q.put(None)
            self._thread.join()


def _journey_slices(network: RoadNetwork, area_map: AreaMap) -> dict[str, dict[str, tuple[str, tuple[str, ...]]]]:
    """area -> local definition id -> (parent journey id, sections).

    A journey wholly inside one area keeps its id. Otherwise each maximal run
    of its sections lying inside one area becomes ``<id>@<area>`` (numbered if
    the journey enters that area more than once).
    """
    out: dict[str, dict[str, tuple[str, tuple[str, ...]]]] = {a: {} for a in area_map.areas}
    for jid in sorted(network.journeys):
        secs = network.journeys[jid].sections
        runs: list[tuple[str, list[str]]] = []
        for sid in secs:
            s = network.sections[sid]
            a, b = area_map.junction_area.get(s.start_junction), area_map.junction_area.get(s.end_junction)
            if a is not None and a == b:
                if runs and runs[-1][0] == a and network.sections[runs[-1][1][-1]].end_junction == s.start_junction:
                    runs[-1][1].append(sid)
                else:
                    runs.append((a, [sid]))
        if len(runs) == 1 and len(runs[0][1]) == len(secs):
            out.setdefault(runs[0][0], {})[jid] = (jid, tuple(secs))
            continue
        per_area: dict[str, int] = {}
        for area, run in runs:
            per_area[area] = per_area.get(area, 0) + 1
        seen: dict[str, int] = {}
        for area, run in runs:
            seen[area] = seen.get(area, 0) + 1
            local = f"{jid}@{area}" if per_area[area] == 1 else f"{jid}@{area}.{seen[area]}"
            out.setdefault(area, {})[local] = (jid, tuple(run))
    return out


class BasuNode:
    """Analytics unit for one area, with an isolated store."""

    def __init__(
        self,
        area_id: str,
        network: RoadNetwork,
        *,
        node_id: str | None = None,
        store_dir: str | Path | None = None,
        mode: str = STRICT,
        ttl_ms: int = DEFAULT_TTL_MS,
        window_ms: int = WINDOW_MS,
        thresholds: Sequence[Threshold] = (),
        tz: str = "UTC",
        slices: dict[str, tuple[str, tuple[str, ...]]] | None = None,
        boundary_junctions: Iterable[str] = (),
        to_gbas: Callable[[str], None] | None = None,
    ):
        self.area_id = area_id
        self.node_id = node_id or node_id_for(area_id)
        self.network = network
        self.ttl_ms = ttl_ms
        self.slice_parent: dict[str, str] = {}
        for local_id, (parent, secs) in (slices or {}).items():
            if local_id not in network.journeys:
                network.register_journey(JourneyDefinition(local_id, local_id, secs))
            if local_id != parent:
                self.slice_parent[local_id] = parent
        self.boundary_junctions = frozenset(boundary_junctions)
        self.to_gbas = to_gbas
        self.store = EventStore(store_dir, node_id=self.node_id, area_id=area_id)
        self.metrics = MetricsEngine(network, window_ms=window_ms, thresholds=thresholds)
        self.engine = CorrelationEngine(
            network, self.store, self.metrics, mode=mode, on_finalized=self._on_finalized
        )
        self.gateway = AnprGateway(network, self.node_id, tz=tz, on_evict=self._on_evict)
        self.stream_time = 0
        self._last_sweep = None
        self.events_emitted = 0
        self.detections_seen = 0

    # -- inbound --------------------------------------------------------

    def handle_message(self, line: str) -> None:
        kind, _, payload = line.partition(" ")
        if kind != "DET":
            raise ValueError(f"{self.node_id}: unexpected message kind {kind!r}")
        self.handle_detection(parse_detection(payload))

    def handle_detection(self, d: Detection) -> list[ExBpafEvent]:
        self.detections_seen += 1
        if d.timestamp > self.stream_time:
            self.stream_time = d.timestamp
        if d.camera_id in self.boundary_junctions and self.to_gbas is not None:
            key = CorrelationKey(d.plate, self.gateway.journey_date(d.timestamp))
            self.forward_boundary_sighting(key, d.camera_id, d.timestamp)
        events, _ = self.gateway.ingest(d)
        for e in events:
            self.engine.correlate(e)
        self.events_emitted += len(events)
        self._maybe_sweep()
        return events

    def _maybe_sweep(self) -> None:
        now = self.stream_time
        if self._last_sweep is None:
            self._last_sweep = now
        elif now - self._last_sweep >= SWEEP_INTERVAL_MS:
            self.sweep(now)

    def sweep(self, now: int) -> None:
        self._last_sweep = now
        self.gateway.evict_stale_trajectories(now, self.ttl_ms)
        self.engine.finalize_idle(now, self.ttl_ms)

    def flush(self) -> None:
        """Finalize everything still in flight (end of stream)."""
        self.engine.finalize_all()
        self.gateway.evict_stale_trajectories(self.stream_time + self.ttl_ms + 1, self.ttl_ms)
        self.store.flush()

    def close(self) -> None:
        self.store.close()

    def _on_evict(self, key: CorrelationKey) -> None:
        self.engine.finalize_instance(str(key))

    # -- outbound -------------------------------------------------------

    def forward_boundary_sighting(self, key: CorrelationKey, junction: str, time: int) -> None:
        if junction not in self.boundary_junctions:
            raise ValueError(f"{junction} is not a boundary junction of {self.node_id}")
        self.to_gbas(
            f"BND {self.node_id}\t{key.registration}\t{key.journey_date.isoformat()}\t{junction}\t{time}"
        )

    def _on_finalized(self, inst: JourneyInstance) -> None:
        if inst.status is not InstanceStatus.COMPLETED or self.to_gbas is None:
            return
        if inst.matched_definition not in self.slice_parent:
            return
        payload = "\t".join([self.node_id, inst.matched_definition, *(encode(e) for e in inst.events)])
        self.to_gbas(f"FRG {payload}")

    # -- queries --------------------------------------------------------

    def read_stream(self, instance_id: str) -> list[ExBpafEvent]:
        if instance_id not in self.store.instance_index:
            reg, _, date = instance_id.partition(":")
            try:
                key = CorrelationKey(reg, dt.date.fromisoformat(date))
            except ValueError:
                key = None
            if key is not None and self.gateway.entry(key) is not None:
                return []
        return self.engine.read_stream(instance_id)


@dataclass
class _Fragment:
    node_id: str
    local_definition: str
    events: list[ExBpafEvent]


@dataclass
class _Pending:
    fragments: dict[str, _Fragment] = field(default_factory=dict)
    sightings: set[tuple[str, int]] = field(default_factory=set)
    last_update: int = 0


def _fragment_components(events: Sequence[ExBpafEvent]) -> list[tuple[str, int, int, str]]:
    opened: dict[str, ExBpafEvent] = {}
    out = []
    for e in events:
        if e.current_state is OPEN:
            opened[e.activity_instance_id] = e
        elif e.current_state is CLOSED and e.activity_instance_id in opened:
            o = opened.pop(e.activity_instance_id)
            out.append((e.activity_definition_id, o.timestamp, e.timestamp, e.activity_instance_id))
    return out


def stitch_cross_area(
    key: CorrelationKey,
    fragments: Sequence[Sequence[ExBpafEvent]],
    sightings: Iterable[tuple[str, int]],
    network: RoadNetwork,
    area_map: AreaMap,
    *,
    server_id: str = "GBAS",
) -> JourneyInstance:
    """Chain per-area fragments and boundary traversals into one journey.

    Boundary traversals are synthesized from consecutive boundary sightings
    joined by a section whose end junctions lie in different areas. The result
    is COMPLETED when the chained path fully matches a journey definition of
    ``network``, DISCARDED otherwise.
    """
    date_s = key.journey_date.isoformat()
    pid = f"{key.registration}:{date_s}"
    comps = [c for frag in fragments for c in _fragment_components(frag)]
    events = [e for frag in fragments for e in frag]
    ordered = sorted(set(sightings), key=lambda s: (s[1], s[0]))
    for (ja, ta), (jb, tb) in zip(ordered, ordered[1:]):
        sid = network.section_between(ja, jb)
        if sid is None or tb <= ta:
            continue
        if area_map.junction_area.get(ja) == area_map.junction_area.get(jb):
            continue
        aid = f"{pid}:{sid}:{ta}"
        comps.append((sid, ta, tb, aid))
        name = network.sections[sid].description or sid
        events.append(ExBpafEvent(f"{server_id}-{aid}-o", ta, server_id, "", pid, "", sid, aid, name, OPEN, None, key))
        events.append(ExBpafEvent(f"{server_id}-{aid}-c", tb, server_id, "", pid, "", sid, aid, name, CLOSED, OPEN, key))
    comps.sort(key=lambda c: (c[1], c[2]))
    events.sort(key=lambda e: (e.timestamp, e.current_state is OPEN))

    inst = JourneyInstance(pid, key, events=events)
    inst.last_activity = max((c[2] for c in comps), default=0)
    inst.samples = [
        MetricSample(sid, pid, aid, t1 - t0, t0, 0) for sid, t0, t1, aid in comps
    ]
    chained = bool(comps)
    for (s1, _, e1, _), (s2, b2, _, _) in zip(comps, comps[1:]):
        if network.sections[s1].end_junction != network.sections[s2].start_junction or e1 != b2:
            chained = False
            break
    if chained:
        match = network.match_path([c[0] for c in comps])
        if match.full is not None:
            inst.status = InstanceStatus.COMPLETED
            inst.matched_definition = match.full
            return inst
    inst.status = InstanceStatus.DISCARDED
    return inst


class GbasNode:
    """Global node: stitches journeys that span two or more areas."""

    def __init__(
        self,
        network: RoadNetwork,
        area_map: AreaMap,
        *,
        slices: dict[str, dict[str, tuple[str, tuple[str, ...]]]] | None = None,
        window_ms: int = WINDOW_MS,
        thresholds: Sequence[Threshold] = (),
        ttl_ms: int = DEFAULT_TTL_MS,
        on_boundary_flow: Callable[[str, MetricSample], None] | None = None,
    ):
        self.network = network
        self.area_map = area_map
        self.ttl_ms = ttl_ms
        self.metrics = MetricsEngine(network, window_ms=window_ms, thresholds=thresholds)
        self.on_boundary_flow = on_boundary_flow
        self.nodes: set[str] = set()
        # parent journey -> set of local slice ids it is split into
        self._expected: dict[str, set[str]] = {}
        self._parent_of: dict[str, str] = {}
        for area_slices in (slices or {}).values():
            for local_id, (parent, _) in area_slices.items():
                if local_id != parent:
                    self._expected.setdefault(parent, set()).add(local_id)
                    self._parent_of[local_id] = parent
        amap = area_map.junction_area
        self.boundary_junctions = frozenset(
            j
            for sec in network.sections.values()
            if amap.get(sec.start_junction) != amap.get(sec.end_junction)
            for j in (sec.start_junction, sec.end_junction)
        )
        self._pending: dict[CorrelationKey, _Pending] = {}
        self._lock = threading.Lock()
        self.instances: dict[str, JourneyInstance] = {}
        self.sighting_duplicates = 0

    def register(self, node_id: str) -> None:
        self.nodes.add(node_id)

    def handle_message(self, line: str) -> None:
        kind, _, payload = line.partition(" ")
        if kind == "BND":
            node_id, reg, date, junction, ts = payload.split("\t")
            self.record_sighting(CorrelationKey(reg, dt.date.fromisoformat(date)), junction, int(ts))
        elif kind == "FRG":
            parts = payload.split("\t")
            node_id, local_def, lines = parts[0], parts[1], parts[2:]
            self.record_fragment(node_id, local_def, [decode(l) for l in lines])
        else:
            raise ValueError(f"GBAS: unexpected message kind {kind!r}")

    def record_sighting(self, key: CorrelationKey, junction: str, time: int) -> bool:
        """Returns False for a duplicate delivery."""
        if junction not in self.boundary_junctions:
            raise ValueError(f"{junction} is not a boundary junction")
        with self._lock:
            p = self._pending.setdefault(key, _Pending())
            if (junction, time) in p.sightings:
                self.sighting_duplicates += 1
                return False
            p.sightings.add((junction, time))
            p.last_update = max(p.last_update, time)
        return True

    def record_fragment(self, node_id: str, local_def: str, events: list[ExBpafEvent]) -> None:
        if not events:
            return
        key = events[0].correlation
        with self._lock:
            p = self._pending.setdefault(key, _Pending())
            p.fragments[local_def] = _Fragment(node_id, local_def, events)
            p.last_update = max(p.last_update, max(e.timestamp for e in events))
            parent = self._parent_of.get(local_def)
            if parent is None or set(p.fragments) != self._expected.get(parent):
                return
            junctions = self._boundary_pairs(parent)
            have = {j for j, _ in p.sightings}
            if not all(a in have and b in have for a, b in junctions):
                return
            self._stitch(key, p)

    def _boundary_pairs(self, parent: str) -> list[tuple[str, str]]:
        out = []
        for sid in self.network.journeys[parent].sections:
            s = self.network.sections[sid]
            if self.area_map.junction_area.get(s.start_junction) != self.area_map.junction_area.get(s.end_junction):
                out.append((s.start_junction, s.end_junction))
        return out

    def _stitch(self, key: CorrelationKey, p: _Pending) -> JourneyInstance | None:
        del self._pending[key]
        if not p.fragments:
            return None
        frags = sorted(p.fragments.values(), key=lambda f: f.events[0].timestamp)
        inst = stitch_cross_area(key, [f.events for f in frags], p.sightings, self.network, self.area_map)
        self.instances[inst.process_instance_id] = inst
        if inst.status is InstanceStatus.COMPLETED:
            window = self.metrics.window
            samples = [s._replace(window=window(s.entry_time)) for s in inst.samples]
            inst.samples = samples
            local = {(c[0], c[1]) for f in frags for c in _fragment_components(f.events)}
            for s in samples:
                if (s.section_id, s.entry_time) not in local:
                    self.metrics.add_sample(s, count_flow=False)
                    if self.on_boundary_flow is not None:
                        self.on_boundary_flow(self.network.sections[s.section_id].start_junction, s)
            self.metrics.complete_journey(inst.process_instance_id, inst.matched_definition, samples)
        return inst

    def finalize_idle(self, now: int, ttl: int | None = None) -> list[tuple[str, InstanceStatus]]:
        # Fragments are only sent once a node has itself waited one ttl, so
        # the global side waits two before giving up on a missing piece.
        ttl = 2 * self.ttl_ms if ttl is None else ttl
        out = []
        with self._lock:
            for key in sorted(k for k, p in self._pending.items() if now - p.last_update > ttl):
                inst = self._stitch(key, self._pending[key])
                if inst is not None:
                    out.append((inst.process_instance_id, inst.status))
        return out

    def flush(self) -> list[tuple[str, InstanceStatus]]:
        with self._lock:
            keys = sorted(self._pending)
            out = []
            for key in keys:
                inst = self._stitch(key, self._pending[key])
                if inst is not None:
                    out.append((inst.process_instance_id, inst.status))
        return out


class Cluster:
    """All area nodes plus the global node, wired by channels."""

    def __init__(
        self,
        network: RoadNetwork,
        area_map: AreaMap | None = None,
        *,
        store_root: str | Path | None = None,
        mode: str = STRICT,
        ttl_ms: int = DEFAULT_TTL_MS,
        window_ms: int = WINDOW_MS,
        thresholds: Sequence[Threshold] = (),
        tz: str = "UTC",
        threaded: bool = False,
        capacity: int = 10_000,
    ):
        self.network = network
        self.area_map = area_map if area_map is not None else AreaMap.single(network)
        problems = self.area_map.violations(network)
        if problems:
            raise RoutingError("; ".join(problems))
        slices = _journey_slices(network, self.area_map)
        self.gbas = GbasNode(
            network, self.area_map, slices=slices, window_ms=window_ms, thresholds=thresholds,
            ttl_ms=ttl_ms, on_boundary_flow=self._boundary_flow,
        )
        self.gbas_channel = Channel(self.gbas.handle_message, threaded=threaded, capacity=capacity, name="GBAS")
        self.nodes: dict[str, BasuNode] = {}
        self.channels: dict[str, Channel] = {}
        boundary = self._boundary_junctions()
        for area in sorted(self.area_map.areas):
            members = [j for j, a in self.area_map.junction_area.items() if a == area]
            sub = network.subnetwork(members)
            node_id = node_id_for(area)
            node = BasuNode(
                area, sub, node_id=node_id,
                store_dir=None if store_root is None else Path(store_root) / node_id,
                mode=mode, ttl_ms=ttl_ms, window_ms=window_ms, thresholds=thresholds, tz=tz,
                slices=slices.get(area, {}),
                boundary_junctions=boundary.get(area, ()),
                to_gbas=self.gbas_channel.send,
            )
            self.nodes[node_id] = node
            self.gbas.register(node_id)
            self.channels[node_id] = Channel(node.handle_message, threaded=threaded, capacity=capacity, name=node_id)
        self.dropped_unrouted = 0
        self.routed = 0
        self._stream_time = 0
        self._last_sweep: int | None = None

    def _boundary_junctions(self) -> dict[str, set[str]]:
        out: dict[str, set[str]] = {}
        amap = self.area_map.junction_area
        for s in self.network.sections.values():
            a, b = amap.get(s.start_junction), amap.get(s.end_junction)
            if a != b:
                out.setdefault(a, set()).add(s.start_junction)
                out.setdefault(b, set()).add(s.end_junction)
        return out

    def _boundary_flow(self, start_junction: str, sample: MetricSample) -> None:
        # Cross-area sections count towards the upstream area's flow.
        node = self.nodes[node_id_for(self.area_map.area_of(start_junction))]
        node.metrics.add_flow(sample.section_id, sample.entry_time)

    def submit(self, d: Detection) -> str | None:
        try:
            node_id = route_detection(d, self.area_map)
        except RoutingError:
            self.dropped_unrouted += 1
            return None
        self.channels[node_id].send(f"DET {format_detection(d)}")
        self.routed += 1
        if d.timestamp > self._stream_time:
            self._stream_time = d.timestamp
            if self._last_sweep is None:
                self._last_sweep = d.timestamp
            elif d.timestamp - self._last_sweep >= SWEEP_INTERVAL_MS:
                self._last_sweep = d.timestamp
                self.gbas.finalize_idle(d.timestamp)
        return node_id

    def run(self, detections: Iterable[Detection]) -> None:
        for d in detections:
            self.submit(d)

    def flush(self) -> None:
        for ch in self.channels.values():
            ch.drain()
        for node in self.nodes.values():
            node.flush()
        self.gbas_channel.drain()
        self.gbas.flush()

    def close(self) -> None:
        for ch in self.channels.values():
            ch.close()
        self.gbas_channel.close()
        for node in self.nodes.values():
            node.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- aggregate views ------------------------------------------------

    def metric_engines(self) -> list[MetricsEngine]:
        return [self.nodes[n].metrics for n in sorted(self.nodes)] + [self.gbas.metrics]

    def rejections(self):
        return sorted(
            (r for n in self.nodes.values() for r in n.gateway.rejections),
            key=lambda r: (r.timestamp, r.plate),
        )

    def outcomes(self) -> dict[str, tuple[InstanceStatus, str | None]]:
        """Final status per instance; stitched results replace fragments."""
        out: dict[str, tuple[InstanceStatus, str | None]] = {}
        for node in self.nodes.values():
            for pid, (status, definition) in node.engine.outcomes.items():
                parent = node.slice_parent.get(definition) if definition else None
                if parent is None:
                    out[pid] = (status, definition)
        for pid, inst in self.gbas.instances.items():
            out[pid] = (inst.status, inst.matched_definition)
        return out

    def completed_journeys(self):
        """(instance, definition, components) for every whole journey.

        Local fragments of stitched journeys are skipped; GBAS holds those.
        """
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            for pid, definition, comps in node.metrics.journeys():
                if definition not in node.slice_parent:
                    yield pid, definition, comps
        yield from self.gbas.metrics.journeys()

    def journey_time_ms(self, instance_id: str) -> int:
        """Whole-journey time, from GBAS for stitched journeys."""
        if self.gbas.metrics.journey_definition(instance_id) is not None:
            return self.gbas.metrics.journey_time_ms(instance_id)
        for node in self.nodes.values():
            definition = node.metrics.journey_definition(instance_id)
            if definition is not None and definition not in node.slice_parent:
                return node.metrics.journey_time_ms(instance_id)
        raise KeyError(f"instance not completed: {instance_id}")
