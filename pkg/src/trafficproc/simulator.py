"""Dataset-driven ANPR detection generator.

Link profiles give, per 15-minute period, the mean journey time of each link
and the number of vehicles entering it. The generator starts exactly that many
vehicles on a journey per period, draws each link time from a normal
distribution around the profile mean and emits one detection per junction
crossed.
"""

from __future__ import annotations

import csv
import datetime as dt
import heapq
import logging
import random
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

from .gateway import Detection
from .network import JourneyDefinition, RoadNetwork

__all__ = [
    "LinkProfile",
    "ProfileError",
    "GroundTruthRecord",
    "Simulation",
    "PlateGenerator",
    "random_plate",
    "load_profiles",
    "parse_profiles",
    "generate",
    "merge_simulations",
    "format_ground_truth",
    "DATASET_HEADER",
    "PERIOD_MS",
    "PERIODS_PER_DAY",
]

log = logging.getLogger(__name__)

DATASET_HEADER = "link_id,date,time_period,avg_jt_s,avg_speed_kph,link_length_km,flow"
PERIOD_MS = 15 * 60 * 1000
PERIODS_PER_DAY = 96


class ProfileError(ValueError):
    pass


class LinkProfile(NamedTuple):
    link_id: str
    date: dt.date
    time_period: int
    avg_journey_time_s: float
    avg_speed_kph: float
    link_length_km: float
    flow: int


ProfileKey = tuple  # (link_id, date, time_period)


def parse_profiles(lines: Iterable[str], *, source: str = "<dataset>") -> dict[ProfileKey, LinkProfile]:
    profiles: dict[ProfileKey, LinkProfile] = {}
    reader = csv.reader(lines)
    for rowno, row in enumerate(reader, start=1):
        if not row or not "".join(row).strip() or row[0].startswith("#"):
            continue
        if row[0] == "link_id":
            continue
        where = f"{source}:{rowno}"
        if len(row) != 7:
            raise ProfileError(f"{where}: expected 7 columns, got {len(row)}")
        try:
            link = row[0].strip()
            date = dt.date.fromisoformat(row[1].strip())
            period = int(row[2])
            jt = float(row[3])
            speed = float(row[4])
            length = float(row[5])
            flow = int(row[6])
        except ValueError as exc:
            raise ProfileError(f"{where}: {exc}") from None
        if not link:
            raise ProfileError(f"{where}: empty link id")
        if not 0 <= period < PERIODS_PER_DAY:
            raise ProfileError(f"{where}: time period {period} outside 0..95")
        if jt <= 0 or speed <= 0 or length <= 0:
            raise ProfileError(f"{where}: journey time, speed and length must be positive")
        if flow < 0:
            raise ProfileError(f"{where}: negative flow")
        key = (link, date, period)
        if key in profiles:
            raise ProfileError(f"{where}: duplicate profile for {link} {date} period {period}")
        implied = length / speed * 3600
        if abs(implied - jt) > 0.2 * jt:
            log.warning("%s: journey time %.2f s inconsistent with length/speed (%.2f s)", where, jt, implied)
        profiles[key] = LinkProfile(link, date, period, jt, speed, length, flow)
    return profiles


def load_profiles(path: str | Path) -> dict[ProfileKey, LinkProfile]:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_profiles(fh, source=str(path))


_LETTERS = string.ascii_uppercase


def random_plate(rng: random.Random) -> str:
    """A UK-style plate: two letters, two digits, three letters."""
    ch = rng.choice
    return (
        ch(_LETTERS) + ch(_LETTERS)
        + f"{rng.randrange(100):02d}"
        + ch(_LETTERS) + ch(_LETTERS) + ch(_LETTERS)
    )


class PlateGenerator:
    """Plates unique within a run; collisions are redrawn."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        self.issued: set[str] = set()
        self.collisions = 0

    def __call__(self) -> str:
        while True:
            plate = random_plate(self.rng)
            if plate not in self.issued:
                self.issued.add(plate)
                return plate
            self.collisions += 1


class GroundTruthRecord(NamedTuple):
    plate: str
    journey_id: str
    crossings: tuple[int, ...]  # instant at each junction along the path
    sections: tuple[str, ...]
    missed_junction: int | None = None

    def traversals(self) -> list[tuple[str, int, int]]:
        return [(s, self.crossings[i], self.crossings[i + 1]) for i, s in enumerate(self.sections)]

    @property
    def journey_time_ms(self) -> int:
        return self.crossings[-1] - self.crossings[0]


def format_ground_truth(r: GroundTruthRecord) -> str:
    times = []
    for _, entry, exit_ in r.traversals():
        times.append(str(entry))
        times.append(str(exit_))
    return ",".join([r.plate, r.journey_id, *times])


@dataclass
class Simulation:
    detections: list[Detection]
    ground_truth: list[GroundTruthRecord]

    @property
    def injected(self) -> list[GroundTruthRecord]:
        return [g for g in self.ground_truth if g.missed_junction is not None]


def _draw_ms(rng: random.Random, mean_s: float, sd_s: float) -> int:
    if sd_s == 0:
        return max(1, round(mean_s * 1000))
    while True:
        x = rng.gauss(mean_s, sd_s)
        ms = round(x * 1000)
        # Truncated normal: non-positive draws are redrawn.
        if x > 0 and ms >= 1:
            return ms


def day_start_ms(date: dt.date) -> int:
    return (date - dt.date(1970, 1, 1)).days * 86_400_000


def generate(
    journey: JourneyDefinition,
    profiles: Mapping[ProfileKey, LinkProfile],
    network: RoadNetwork,
    *,
    date: dt.date,
    periods: Sequence[int] | None = None,
    seed: int = 0,
    cv: float | Mapping[str, float] = 0.05,
    miss_rate: float = 0.0,
    area_of: Callable[[str], str] | None = None,
    plates: PlateGenerator | None = None,
    rng: random.Random | None = None,
) -> Simulation:
    """Detections and ground truth for one journey on one date.

    Every vehicle starting in period p draws its link times from the period-p
    profiles. ``flow`` of the journey's first link sets how many vehicles
    start in that period; their starts are evenly spaced over the period.
    ``miss_rate`` removes one interior detection from that fraction of
    vehicles, chosen at random.
    """
    rng = rng if rng is not None else random.Random(seed)
    plates = plates if plates is not None else PlateGenerator(rng)
    sections = journey.sections
    junctions = network.path_junctions(sections)
    if periods is None:
        periods = sorted({k[2] for k in profiles if k[0] == sections[0] and k[1] == date})
    areas = [area_of(j) if area_of is not None else "" for j in junctions]
    base = day_start_ms(date)

    def cv_of(link: str) -> float:
        return cv.get(link, 0.05) if isinstance(cv, Mapping) else cv

    truth: list[GroundTruthRecord] = []
    for period in periods:
        prof = []
        for s in sections:
            p = profiles.get((s, date, period))
            if p is None:
                raise ProfileError(f"missing profile for {s} on {date} period {period}")
            prof.append(p)
        flow = prof[0].flow
        start = base + period * PERIOD_MS
        for i in range(flow):
            t = start + i * PERIOD_MS // flow
            crossings = [t]
            for p in prof:
                mean = p.avg_journey_time_s
                t += _draw_ms(rng, mean, cv_of(p.link_id) * mean)
                crossings.append(t)
            truth.append(GroundTruthRecord(plates(), journey.id, tuple(crossings), sections))

    if miss_rate > 0 and truth:
        if len(sections) < 2:
            raise ValueError("missed detections need a journey with an interior junction")
        n_miss = round(miss_rate * len(truth))
        for idx in sorted(rng.sample(range(len(truth)), n_miss)):
            truth[idx] = truth[idx]._replace(missed_junction=rng.randrange(1, len(sections)))

    rows = []
    for g in truth:
        for k, ts in enumerate(g.crossings):
            if k != g.missed_junction:
                rows.append((ts, g.plate, k))
    rows.sort()
    detections = [Detection(plate, ts, areas[k], junctions[k]) for ts, plate, k in rows]
    return Simulation(detections, truth)


def merge_simulations(sims: Iterable[Simulation]) -> Simulation:
    sims = list(sims)
    detections = list(heapq.merge(*(s.detections for s in sims), key=lambda d: (d.timestamp, d.plate)))
    truth = [g for s in sims for g in s.ground_truth]
    return Simulation(detections, truth)
