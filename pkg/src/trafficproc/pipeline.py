"""End-to-end run: simulate, route, correlate, measure, validate, write."""

from __future__ import annotations

import datetime as dt
import json
import logging
import os
import random
import shutil
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from .correlation import InstanceStatus
from .gateway import format_detection, format_rejection
from .metrics import (
    ALERT_HEADER,
    METRIC_HEADER,
    VECTOR_HEADER,
    Threshold,
    format_alert,
    load_thresholds,
)
from .network import RoadNetwork, load_network
from .simulator import (
    PERIOD_MS,
    PlateGenerator,
    Simulation,
    format_ground_truth,
    generate,
    load_profiles,
    merge_simulations,
)
from .stats import REPORT_HEADER, TTestResult, format_report_row, t_test_one_sample, t_test_paired
from .topology import AreaMap, Cluster, load_area_map

__all__ = ["RunConfig", "RunResult", "StageError", "run", "write_outputs", "simulate", "ttest_rows", "data_path", "TRUNCATED"]

log = logging.getLogger(__name__)

TRUNCATED = "# TRUNCATED"


def data_path(name: str) -> Path:
    return Path(str(resources.files("trafficproc") / "data" / name))


@dataclass
class RunConfig:
    network: str = field(default_factory=lambda: str(data_path("birmingham_staffordshire.net")))
    areas: str | None = None
    dataset: str = field(default_factory=lambda: str(data_path("highways_2013-05-01.csv")))
    journeys: list[str] = field(default_factory=lambda: ["BirmStaf01"])
    date: str | None = None
    periods: list[int] | None = None
    seed: int = 0
    mode: str = "strict"
    ttl_min: float = 30.0
    window_min: float = 15.0
    cv: float = 0.05
    thresholds: str | None = None
    out: str | None = None
    miss_rate: float = 0.0
    alpha: float = 0.01
    paired: bool = False
    tz: str = "UTC"

    @property
    def ttl_ms(self) -> int:
        return round(self.ttl_min * 60_000)

    @property
    def window_ms(self) -> int:
        return round(self.window_min * 60_000)

    def output_dir(self) -> Path:
        out = self.out or os.environ.get("TRAFFICPROC_OUT") or "trafficproc-out"
        return Path(out)


@dataclass
class RunResult:
    config: RunConfig
    network: RoadNetwork
    cluster: Cluster
    simulation: Simulation
    profiles: Mapping
    ttest: list[tuple[str, float, TTestResult]]
    truncated: bool = False

    @property
    def any_rejected(self) -> bool:
        return any(r.reject for _, _, r in self.ttest)


def _area_map(cfg: RunConfig, network: RoadNetwork) -> AreaMap:
    path = cfg.areas or cfg.network
    amap = load_area_map(path)
    if not amap.junction_area:
        return AreaMap.single(network)
    return amap


def simulate(cfg: RunConfig, network: RoadNetwork, profiles, area_map: AreaMap) -> Simulation:
    dates = sorted({k[1] for k in profiles})
    if cfg.date is not None:
        date = dt.date.fromisoformat(cfg.date)
    elif dates:
        date = dates[0]
    else:
        raise ValueError("dataset is empty")
    rng = random.Random(cfg.seed)
    plates = PlateGenerator(rng)
    sims = []
    for jid in cfg.journeys:
        if jid not in network.journeys:
            raise KeyError(f"unknown journey {jid}")
        sims.append(
            generate(
                network.journeys[jid], profiles, network, date=date, periods=cfg.periods, cv=cfg.cv,
                miss_rate=cfg.miss_rate, area_of=area_map.junction_area.get, plates=plates, rng=rng,
            )
        )
    return merge_simulations(sims)


def ttest_rows(
    cluster: Cluster,
    profiles: Mapping,
    *,
    alpha: float = 0.01,
    paired: bool = False,
    links: Sequence[str] | None = None,
) -> list[tuple[str, float, TTestResult]]:
    """One t test per link over the traversal times of completed journeys.

    The reference mean is the dataset mean of the period each traversal
    entered in, averaged over traversals (a single value when the dataset mean
    is constant). In paired mode per-period observed means are paired with
    the dataset means instead.
    """
    samples: dict[str, list[tuple[int, int]]] = {}
    for _, _, comps in cluster.completed_journeys():
        for sid, ms, entry in comps:
            samples.setdefault(sid, []).append((entry, ms))
    dataset: dict[str, dict[tuple[dt.date, int], float]] = {}
    for (link, date, period), p in profiles.items():
        dataset.setdefault(link, {})[(date, period)] = p.avg_journey_time_s

    rows = []
    for link in links if links is not None else sorted(samples):
        obs = samples.get(link, [])
        ds = dataset.get(link)
        if len(obs) < 2 or not ds:
            continue
        if paired:
            groups: dict[tuple[dt.date, int], list[int]] = {}
            for entry, ms in obs:
                groups.setdefault(_period_of(entry), []).append(ms)
            keys = sorted(k for k in groups if k in ds)
            if len(keys) < 2:
                continue
            observed = [sum(groups[k]) / len(groups[k]) / 1000 for k in keys]
            expected = [ds[k] for k in keys]
            r = t_test_paired(observed, expected, alpha)
            mean_expected = sum(expected) / len(expected)
            rows.append((link, mean_expected, replace(r, sample_mean=sum(observed) / len(observed), mu0=mean_expected)))
            continue
        counts: dict[tuple[dt.date, int], int] = {}
        for entry, _ in obs:
            k = _period_of(entry)
            counts[k] = counts.get(k, 0) + 1
        known = {k: n for k, n in counts.items() if k in ds}
        if not known:
            continue
        means = {ds[k] for k in known}
        if len(means) == 1:
            mu0 = means.pop()
        else:
            mu0 = sum(ds[k] * n for k, n in known.items()) / sum(known.values())
        rows.append((link, mu0, t_test_one_sample([ms / 1000 for _, ms in obs], mu0, alpha)))
    return rows


def _period_of(entry_ms: int) -> tuple[dt.date, int]:
    day, rest = divmod(entry_ms, 86_400_000)
    return dt.date(1970, 1, 1) + dt.timedelta(days=day), rest // PERIOD_MS


def _write(path: Path, header: str | None, rows: Sequence[str], truncated: bool) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header is not None:
            fh.write(header + "\n")
        for r in rows:
            fh.write(r + "\n")
        if truncated:
            fh.write(TRUNCATED + "\n")


def write_outputs(result: RunResult) -> Path:
    cfg = result.config
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    t = result.truncated
    cluster = result.cluster
    metric_rows, vector_rows = [], []
    for engine in cluster.metric_engines():
        metric_rows.extend(engine.metric_rows())
        vector_rows.extend(engine.vector_rows())
    _write(out / "metrics.csv", METRIC_HEADER, metric_rows, t)
    _write(out / "journey_vectors.csv", VECTOR_HEADER, vector_rows, t)
    alerts = sorted(
        (a for e in cluster.metric_engines() for a in e.alerts), key=lambda a: (a.time, a.target, a.instance_id)
    )
    _write(out / "alerts.log", ALERT_HEADER, [format_alert(a) for a in alerts], t)
    _write(out / "ttest.csv", REPORT_HEADER, [format_report_row(l, m, r) for l, m, r in result.ttest], t)
    _write(out / "ground_truth.csv", None, [format_ground_truth(g) for g in result.simulation.ground_truth], t)
    _write(out / "rejections.log", None, [format_rejection(r) for r in cluster.rejections()], t)
    outcomes = cluster.outcomes()
    _write(
        out / "instances.csv",
        "instance_id,status,definition_id",
        [f"{pid},{s.value},{d or ''}" for pid, (s, d) in sorted(outcomes.items())],
        t,
    )
    shutil.copyfile(cfg.network, out / "network.net")
    summary = {
        "config": asdict(cfg),
        "detections": len(result.simulation.detections),
        "vehicles": len(result.simulation.ground_truth),
        "injected_misses": len(result.simulation.injected),
        "events": sum(n.events_emitted for n in cluster.nodes.values()),
        "completed": sum(1 for s, _ in outcomes.values() if s is InstanceStatus.COMPLETED),
        "discarded": sum(1 for s, _ in outcomes.values() if s is InstanceStatus.DISCARDED),
        "rejections": len(cluster.rejections()),
        "dropped_unrouted": cluster.dropped_unrouted,
        "truncated": t,
    }
    (out / "run.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


class StageError(RuntimeError):
    """A pipeline failure labelled with the stage it happened in."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@contextmanager
def _stage(name: str):
    try:
        yield
    except (StageError, KeyboardInterrupt):
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def run(cfg: RunConfig, *, write: bool = True, store: bool = True) -> RunResult:
    """simulate, route, correlate, measure, validate and write outputs."""
    with _stage("load"):
        network = load_network(cfg.network)
        area_map = _area_map(cfg, network)
        profiles = load_profiles(cfg.dataset)
        thresholds: list[Threshold] = load_thresholds(cfg.thresholds) if cfg.thresholds else []
    with _stage("simulate"):
        sim = simulate(cfg, network, profiles, area_map)

    out = cfg.output_dir()
    store_root = None
    if write and store:
        store_root = out / "store"
        if store_root.exists():
            shutil.rmtree(store_root)
    with _stage("route"):
        cluster = Cluster(
            network, area_map, store_root=store_root, mode=cfg.mode, ttl_ms=cfg.ttl_ms,
            window_ms=cfg.window_ms, thresholds=thresholds, tz=cfg.tz,
        )
    truncated = False
    with _stage("correlate"):
        try:
            cluster.run(sim.detections)
        except KeyboardInterrupt:
            truncated = True
        cluster.flush()
    with _stage("validate"):
        rows = ttest_rows(cluster, profiles, alpha=cfg.alpha, paired=cfg.paired)
    result = RunResult(cfg, network, cluster, sim, profiles, rows, truncated)
    if write:
        with _stage("write"):
            out.mkdir(parents=True, exist_ok=True)
            (out / "detections.csv").write_text(
                "".join(format_detection(d) + "\n" for d in sim.detections), encoding="utf-8"
            )
            write_outputs(result)
    cluster.close()
    return result
