"""Road network graph and journey (process) definitions.

The network is a directed graph of junctions joined by road sections. Every
section belongs to exactly one road, and a journey definition is an ordered
chain of adjacent sections. Journey definitions form the model repository that
observed vehicle paths are matched against.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

__all__ = [
    "Junction",
    "RoadSection",
    "Road",
    "JourneyDefinition",
    "RoadNetwork",
    "MatchResult",
    "NetworkError",
    "NetworkParseError",
    "load_network",
    "parse_network",
]

# Record kinds belonging to the area map; tolerated and skipped here.
_AREA_RECORDS = frozenset({"A", "JA"})


class NetworkError(ValueError):
    """A network violates one or more structural invariants."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class NetworkParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


@dataclass(frozen=True)
class Junction:
    id: str
    name: str = ""


@dataclass(frozen=True)
class RoadSection:
    id: str
    start_junction: str
    end_junction: str
    road: str
    length_km: float = 0.0
    description: str = ""


@dataclass(frozen=True)
class Road:
    id: str
    sections: frozenset[str] = frozenset()


@dataclass(frozen=True)
class JourneyDefinition:
    id: str
    name: str
    sections: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "sections", tuple(self.sections))


@dataclass(frozen=True)
class MatchResult:
    """Outcome of matching an observed section sequence.

    ``full`` is the definition whose section list equals the observation;
    ``prefix`` holds every definition the observation is a proper prefix of.
    """

    full: str | None = None
    prefix: frozenset[str] = frozenset()

    @property
    def kind(self) -> str:
        if self.full is not None:
            return "full"
        return "prefix" if self.prefix else "none"


@dataclass
class RoadNetwork:
    junctions: dict[str, Junction] = field(default_factory=dict)
    sections: dict[str, RoadSection] = field(default_factory=dict)
    roads: dict[str, Road] = field(default_factory=dict)
    journeys: Mapping[str, JourneyDefinition] = field(default_factory=dict)

    def __post_init__(self):
        self._lock = threading.Lock()
        self._by_endpoints: dict[tuple[str, str], str] = {}
        self._outgoing: dict[str, list[str]] = {}
        for sid, s in self.sections.items():
            self._by_endpoints.setdefault((s.start_junction, s.end_junction), sid)
            self._outgoing.setdefault(s.start_junction, []).append(sid)
        self._reindex_journeys(self.journeys)

    def _reindex_journeys(self, journeys: Mapping[str, JourneyDefinition]) -> None:
        by_first: dict[str, list[str]] = {}
        for jid, j in journeys.items():
            by_first.setdefault(j.sections[0], []).append(jid)
        # One tuple swap; readers holding the old snapshot stay consistent.
        self._snapshot = (journeys, {k: tuple(sorted(v)) for k, v in by_first.items()})
        self.journeys = journeys

    # -- validation -------------------------------------------------------

    def violations(self) -> list[str]:
        """Every broken invariant, one message per offense."""
        out: list[str] = []
        for sid, s in self.sections.items():
            for end in (s.start_junction, s.end_junction):
                if end not in self.junctions:
                    out.append(f"section {sid}: dangling junction {end}")
            if s.start_junction == s.end_junction:
                out.append(f"section {sid}: start and end junction are both {s.start_junction}")
            if s.length_km < 0:
                out.append(f"section {sid}: negative length {s.length_km}")
            if s.road not in self.roads or sid not in self.roads[s.road].sections:
                out.append(f"section {sid}: not owned by road {s.road}")
        owner: dict[str, str] = {}
        for rid in sorted(self.roads):
            for sid in sorted(self.roads[rid].sections):
                if sid in owner:
                    out.append(f"section in two roads: {sid} in {owner[sid]} and {rid}")
                else:
                    owner[sid] = rid
                if sid not in self.sections:
                    out.append(f"road {rid}: unknown section {sid}")
        seen_pairs: dict[tuple[str, str], str] = {}
        for sid in sorted(self.sections):
            s = self.sections[sid]
            pair = (s.start_junction, s.end_junction)
            if pair in seen_pairs:
                out.append(
                    f"parallel sections {seen_pairs[pair]} and {sid} between {pair[0]} and {pair[1]}"
                )
            else:
                seen_pairs[pair] = sid
        for jid in sorted(self.journeys):
            out.extend(self._journey_violations(self.journeys[jid]))
        return out

    def _journey_violations(self, j: JourneyDefinition) -> list[str]:
        out = []
        if not j.sections:
            return [f"journey {j.id}: empty section list"]
        if len(set(j.sections)) != len(j.sections):
            out.append(f"journey {j.id}: revisits a section")
        missing = [s for s in j.sections if s not in self.sections]
        if missing:
            return out + [f"journey {j.id}: unknown section {m}" for m in missing]
        for a, b in zip(j.sections, j.sections[1:]):
            sa, sb = self.sections[a], self.sections[b]
            if sa.end_junction != sb.start_junction:
                out.append(
                    f"journey {j.id}: non-adjacent sections {a} ({sa.end_junction}) -> "
                    f"{b} ({sb.start_junction})"
                )
        return out

    def validate(self) -> None:
        problems = self.violations()
        if problems:
            raise NetworkError(problems)

    # -- queries ------------------------------------------------------------

    def section_between(self, start: str, end: str) -> str | None:
        return self._by_endpoints.get((start, end))

    def outgoing(self, junction: str) -> list[str]:
        return list(self._outgoing.get(junction, ()))

    def path_junctions(self, sections: Sequence[str]) -> list[str]:
        """Junction sequence visited by a chain of sections."""
        if not sections:
            return []
        out = [self.sections[sections[0]].start_junction]
        out.extend(self.sections[s].end_junction for s in sections)
        return out

    def match_path(self, observed: Sequence[str]) -> MatchResult:
        if not observed:
            raise ValueError("observed path must be non-empty")
        observed = tuple(observed)
        journeys, by_first = self._snapshot
        full = None
        prefix = set()
        for jid in by_first.get(observed[0], ()):
            secs = journeys[jid].sections
            if secs == observed:
                full = jid
            elif len(secs) > len(observed) and secs[: len(observed)] == observed:
                prefix.add(jid)
        return MatchResult(full, frozenset(prefix))

    def register_journey(self, definition: JourneyDefinition) -> str:
        with self._lock:
            if definition.id in self.journeys:
                raise NetworkError([f"duplicate journey id {definition.id}"])
            problems = self._journey_violations(definition)
            if problems:
                raise NetworkError(problems)
            journeys = dict(self._snapshot[0])
            journeys[definition.id] = definition
            self._reindex_journeys(journeys)
        return definition.id

    def subnetwork(self, junction_ids: Iterable[str]) -> RoadNetwork:
        """Junctions given plus the sections lying wholly among them."""
        keep = set(junction_ids)
        sections = {
            sid: s
            for sid, s in self.sections.items()
            if s.start_junction in keep and s.end_junction in keep
        }
        roads = {}
        for sid, s in sections.items():
            prev = roads.get(s.road, frozenset())
            roads[s.road] = prev | {sid}
        return RoadNetwork(
            junctions={j: self.junctions[j] for j in keep if j in self.junctions},
            sections=sections,
            roads={rid: Road(rid, secs) for rid, secs in roads.items()},
            journeys={},
        )


def parse_network(text: str, *, validate: bool = True) -> RoadNetwork:
    junctions: dict[str, Junction] = {}
    sections: dict[str, RoadSection] = {}
    road_sections: dict[str, set[str]] = {}
    journeys: dict[str, JourneyDefinition] = {}
    problems: list[str] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        kind, _, rest = line.partition(",")
        kind = kind.strip()
        if kind in _AREA_RECORDS:
            continue
        if kind == "J":
            parts = rest.split(",", 1)
            jid = parts[0].strip()
            if not jid:
                raise NetworkParseError(lineno, "junction record needs an id")
            if jid in junctions:
                problems.append(f"duplicate junction id {jid}")
            junctions[jid] = Junction(jid, parts[1].strip() if len(parts) > 1 else "")
        elif kind == "S":
            parts = rest.split(",", 5)
            if len(parts) < 5:
                raise NetworkParseError(lineno, "section record needs id,start,end,road,length")
            sid, start, end, road = (p.strip() for p in parts[:4])
            if not sid or not road:
                raise NetworkParseError(lineno, "section id and road must be non-empty")
            try:
                length = float(parts[4])
            except ValueError:
                raise NetworkParseError(lineno, f"bad section length {parts[4]!r}") from None
            desc = parts[5].strip() if len(parts) > 5 else ""
            if sid in sections:
                if sections[sid].road == road:
                    problems.append(f"duplicate section id {sid}")
                # A second road claiming the section surfaces as a
                # disjointness violation below.
                road_sections.setdefault(road, set()).add(sid)
                continue
            sections[sid] = RoadSection(sid, start, end, road, length, desc)
            road_sections.setdefault(road, set()).add(sid)
        elif kind == "P":
            parts = rest.split(",", 2)
            if len(parts) < 3:
                raise NetworkParseError(lineno, "journey record needs id,name,sections")
            jid, name = parts[0].strip(), parts[1].strip()
            secs = tuple(s.strip() for s in parts[2].split(";") if s.strip())
            if not jid or not secs:
                raise NetworkParseError(lineno, "journey id and section list must be non-empty")
            if jid in journeys:
                problems.append(f"duplicate journey id {jid}")
            journeys[jid] = JourneyDefinition(jid, name, secs)
        else:
            raise NetworkParseError(lineno, f"unknown record kind {kind!r}")

    net = RoadNetwork(
        junctions=junctions,
        sections=sections,
        roads={rid: Road(rid, frozenset(s)) for rid, s in road_sections.items()},
        journeys=journeys,
    )
    if validate:
        problems.extend(net.violations())
        if problems:
            raise NetworkError(problems)
    return net


def load_network(path: str | Path, *, validate: bool = True) -> RoadNetwork:
    text = Path(path).read_text(encoding="utf-8")
    return parse_network(text, validate=validate)
