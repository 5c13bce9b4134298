"""Latency and throughput benchmark of the correlation and metric path.

The workload is route 1 under uniform flow. Detections are generated up
front, so the timers only cover ingest, correlation and metric updates.
"""

from __future__ import annotations

import datetime as dt
import gc
import math
import os
import platform
import random
import tempfile
import time
from dataclasses import dataclass, field
from typing import Sequence

from .correlation import LatencyRecorder
from .network import RoadNetwork, load_network
from .simulator import LinkProfile, PlateGenerator, Simulation, generate, load_profiles, merge_simulations
from .topology import AreaMap, Cluster

__all__ = [
    "LatencyReport",
    "BenchResult",
    "run_bench",
    "bench_workload",
    "latency_report",
    "decile_means",
    "decile_drift",
    "raw_volume_bytes",
    "format_bench",
    "EVENT_SIZE_BYTES",
    "FULL_RUN_EVENTS",
    "BENCH_HEADER",
]

EVENT_SIZE_BYTES = 1024
# 24 million vehicles, two events on each of 14 links.
FULL_RUN_EVENTS = 24_000_000 * 2 * 14
WARMUP_FRACTION = 0.05
BENCH_PERIODS = 94  # the last two periods of a day stay empty
BENCH_HEADER = "operation,io_ops,avg_ms,stdev_ms,throughput_eps"


@dataclass(frozen=True)
class LatencyReport:
    operation: str
    io_ops: str
    count: int
    mean_ms: float
    sd_ms: float
    throughput_per_s: float

    def row(self) -> str:
        return f"{self.operation},{self.io_ops},{self.mean_ms:.6f},{self.sd_ms:.6f},{self.throughput_per_s:.0f}"


@dataclass
class BenchResult:
    reports: list[LatencyReport]
    events: int
    vehicles: int
    nodes: int
    seed: int
    wall_s: float
    read_deciles: list[float]
    serial: list[LatencyReport] = field(default_factory=list)
    host: str = ""

    @property
    def end_to_end_eps(self) -> float:
        return self.events / self.wall_s if self.wall_s > 0 else math.inf

    @property
    def read_drift(self) -> float:
        return decile_drift(self.read_deciles)

    @property
    def scale_factor(self) -> float:
        return self.events / FULL_RUN_EVENTS

    @property
    def raw_volume_bytes(self) -> int:
        return raw_volume_bytes(self.events)


def raw_volume_bytes(events: int, event_size: int = EVENT_SIZE_BYTES) -> int:
    return events * event_size


def _steady(samples: Sequence[int]) -> Sequence[int]:
    return samples[int(len(samples) * WARMUP_FRACTION):]


def latency_report(operation: str, io_ops: str, samples_ns: Sequence[int]) -> LatencyReport:
    """Mean and sample sd in ms after dropping the warm-up share."""
    xs = _steady(samples_ns)
    n = len(xs)
    if n == 0:
        raise ValueError(f"no samples for {operation}")
    mean = math.fsum(xs) / n
    var = math.fsum((x - mean) ** 2 for x in xs) / (n - 1) if n > 1 else 0.0
    mean_ms = mean / 1e6
    return LatencyReport(operation, io_ops, n, mean_ms, math.sqrt(var) / 1e6, 1000 / mean_ms if mean_ms else math.inf)


def decile_means(samples_ns: Sequence[int]) -> list[float]:
    """Mean latency in ms of each tenth of the steady-state samples."""
    xs = _steady(samples_ns)
    n = len(xs)
    if n < 10:
        raise ValueError("need at least ten samples for deciles")
    out = []
    for k in range(10):
        part = xs[k * n // 10:(k + 1) * n // 10]
        out.append(math.fsum(part) / len(part) / 1e6)
    return out


def decile_drift(deciles: Sequence[float]) -> float:
    """Relative change of the last decile mean against the first."""
    return abs(deciles[-1] - deciles[0]) / deciles[0]


def _uniform_profiles(base: dict, date: dt.date, per_period: int) -> dict:
    means: dict[str, LinkProfile] = {}
    for (link, _, _), p in sorted(base.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])):
        means.setdefault(link, p)
    return {
        (link, date, period): p._replace(date=date, time_period=period, flow=per_period)
        for link, p in means.items()
        for period in range(BENCH_PERIODS)
    }


def bench_workload(
    event_volume: int,
    network: RoadNetwork,
    profiles: dict,
    *,
    seed: int = 0,
    journey_id: str = "BirmStaf01",
    start: dt.date = dt.date(2013, 5, 1),
) -> Simulation:
    """About ``event_volume`` events of route-1 traffic spread over whole days."""
    if event_volume <= 0:
        raise ValueError("empty workload")
    journey = network.journeys[journey_id]
    per_vehicle = 2 * len(journey.sections)
    vehicles = math.ceil(event_volume / per_vehicle)
    # Keep a period to a few thousand vehicles, spilling onto more days.
    days = math.ceil(vehicles / (BENCH_PERIODS * 2000))
    per_period = math.ceil(vehicles / (BENCH_PERIODS * days))
    rng = random.Random(seed)
    plates = PlateGenerator(rng)
    sims = []
    for d in range(days):
        date = start + dt.timedelta(days=d)
        sims.append(
            generate(journey, _uniform_profiles(profiles, date, per_period), network, date=date,
                     cv=0.05, plates=plates, rng=rng)
        )
    return merge_simulations(sims)


def _measure(sim: Simulation, network: RoadNetwork, *, threaded: bool, store_dir: str) -> tuple[LatencyRecorder, int, float, int]:
    area_map = AreaMap.single(network)
    cluster = Cluster(network, area_map, store_root=store_dir, threaded=threaded)
    timer = LatencyRecorder()
    for node in cluster.nodes.values():
        node.engine.timer = timer
    gc_was_enabled = gc.isenabled()
    gc.collect()
    gc.disable()
    try:
        t0 = time.perf_counter()
        cluster.run(sim.detections)
        cluster.flush()
        wall = time.perf_counter() - t0
    finally:
        if gc_was_enabled:
            gc.enable()
    events = sum(n.events_emitted for n in cluster.nodes.values())
    nodes = len(cluster.nodes)
    cluster.close()
    return timer, events, wall, nodes


def _reports(timer: LatencyRecorder) -> list[LatencyReport]:
    return [
        latency_report("event-corr read", "1 read", timer.read),
        latency_report("event-corr write", "1 write", timer.write),
        latency_report("metric gen", "1 read + 1 write", timer.total),
    ]


def _host() -> str:
    return f"{platform.node()} {platform.machine()} {os.cpu_count()} cpus python {platform.python_version()}"


def run_bench(
    event_volume: int = 1_000_000,
    *,
    seed: int = 0,
    serial: bool = False,
    concurrent: bool = True,
    network: str | RoadNetwork | None = None,
    dataset: str | None = None,
) -> BenchResult:
    from .pipeline import data_path

    if event_volume <= 0:
        raise ValueError("empty workload")
    net = network if isinstance(network, RoadNetwork) else load_network(
        network or data_path("birmingham_staffordshire.net")
    )
    profiles = load_profiles(dataset or data_path("highways_2013-05-01.csv"))
    sim = bench_workload(event_volume, net, profiles, seed=seed)
    with tempfile.TemporaryDirectory(prefix="trafficproc-bench-") as tmp:
        timer, events, wall, nodes = _measure(sim, net, threaded=concurrent, store_dir=os.path.join(tmp, "main"))
        result = BenchResult(
            _reports(timer), events, len(sim.ground_truth), nodes, seed, wall,
            decile_means(timer.read), host=_host(),
        )
        if serial:
            s_timer, _, _, _ = _measure(sim, net, threaded=False, store_dir=os.path.join(tmp, "serial"))
            result.serial = _reports(s_timer)
    return result


def format_bench(r: BenchResult) -> str:
    lines = [
        f"# host: {r.host}",
        f"# volume: {r.events} events from {r.vehicles} vehicles "
        f"(scale factor {r.scale_factor:.6f} of {FULL_RUN_EVENTS} events)",
        f"# nodes: {r.nodes}",
        f"# seed: {r.seed}",
        BENCH_HEADER,
        *(rep.row() for rep in r.reports),
        f"# end-to-end: {r.end_to_end_eps:.0f} events/s over {r.wall_s:.2f} s",
        "# read decile means (ms): " + " ".join(f"{d:.6f}" for d in r.read_deciles),
        f"# read decile drift: {r.read_drift:.1%}",
        f"# raw volume at {EVENT_SIZE_BYTES} B/event: {r.raw_volume_bytes / 2**30:.3f} GiB; "
        f"full run {raw_volume_bytes(FULL_RUN_EVENTS) / 2**30:.1f} GiB",
    ]
    if r.serial:
        lines.append("# serial attribution")
        lines.append(BENCH_HEADER)
        lines.extend(rep.row() for rep in r.serial)
    return "\n".join(lines) + "\n"
