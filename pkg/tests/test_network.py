import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import ROUTE1, SMALL_NET
from trafficproc.network import (
    JourneyDefinition,
    NetworkError,
    NetworkParseError,
    RoadSection,
    load_network,
    parse_network,
)
from trafficproc.pipeline import data_path


def test_small_network_counts(small_network):
    assert len(small_network.junctions) == 5
    assert len(small_network.sections) == 4
    assert list(small_network.journeys) == ["BirmStaf01"]


def test_empty_document_is_valid():
    net = parse_network("")
    assert not net.junctions and not net.sections and not net.journeys
    assert net.violations() == []


def test_section_in_two_roads():
    text = SMALL_NET + "S,LM1011,M6J5,M6J4A,M42,4.1\n"
    with pytest.raises(NetworkError) as err:
        parse_network(text)
    assert any("section in two roads" in v for v in err.value.violations)


def test_section_between(small_network):
    assert small_network.section_between("M6J6", "M6J5") == "LM1012"
    assert small_network.section_between("M6J5", "M6J6") is None
    assert small_network.section_between("M6J6", "M42J8") is None


def test_match_path_full_prefix_none(network):
    assert network.match_path(ROUTE1).full == "BirmStaf01"
    r = network.match_path(["LM1012"])
    assert r.kind == "prefix" and r.prefix == {"BirmStaf01"}
    assert network.match_path(["LM1015", "LM1012"]).kind == "none"


def test_match_path_none_agrees_with_scan(network):
    observed = ["LM1015", "LM1012"]
    scan = [
        j.id for j in network.journeys.values()
        if list(j.sections[: len(observed)]) == observed
    ]
    assert scan == []


def test_register_journey(small_network):
    # Route 2 needs its sections first.
    text = SMALL_NET + (
        "J,M6J7\nS,LM1015,M6J6,M6J7,M6,4.0\n"
    )
    net = parse_network(text)
    assert net.register_journey(JourneyDefinition("BirmStaf02", "route 2", ["LM1015"])) == "BirmStaf02"
    assert "BirmStaf02" in net.journeys
    with pytest.raises(NetworkError, match="duplicate"):
        net.register_journey(JourneyDefinition("BirmStaf01", "again", ["LM1012"]))
    with pytest.raises(NetworkError, match="non-adjacent"):
        net.register_journey(JourneyDefinition("Gap", "gap", ["LM1012", "LM513A"]))


def test_parallel_sections_rejected():
    text = "J,A\nJ,B\nS,S1,A,B,R,1\nS,S2,A,B,R,1\n"
    with pytest.raises(NetworkError, match="parallel"):
        parse_network(text)


def test_revisiting_journey_rejected():
    text = "J,A\nJ,B\nS,S1,A,B,R,1\nS,S2,B,A,R,1\nP,Loop,loop,S1;S2;S1\n"
    with pytest.raises(NetworkError, match="revisits"):
        parse_network(text)


def test_dangling_junction():
    with pytest.raises(NetworkError, match="dangling"):
        parse_network("J,A\nS,S1,A,B,R,1\n")


def test_unknown_record_kind():
    with pytest.raises(NetworkParseError) as err:
        parse_network("J,A\nX,what\n")
    assert err.value.lineno == 2


def test_bad_length():
    with pytest.raises(NetworkParseError, match="length"):
        parse_network("J,A\nJ,B\nS,S1,A,B,R,long\n")


def test_subnetwork_keeps_inner_sections(network):
    sub = network.subnetwork(["M6J6", "M6J5", "M6J4A"])
    assert set(sub.sections) == {"LM1012", "LM1011"}
    assert sub.journeys == {}


def test_shipped_network_invariants(network):
    # Road section sets pairwise disjoint.
    for a, b in itertools.combinations(network.roads.values(), 2):
        assert not (a.sections & b.sections)
    # Journey sections chain end to start.
    for j in network.journeys.values():
        for x, y in zip(j.sections, j.sections[1:]):
            assert network.sections[x].end_junction == network.sections[y].start_junction
    # section_between is a partial function.
    pairs = [(s.start_junction, s.end_junction) for s in network.sections.values()]
    assert len(pairs) == len(set(pairs))


SHIPPED = load_network(data_path("birmingham_staffordshire.net"))


@given(st.integers(min_value=1, max_value=len(ROUTE1) - 1))
def test_every_proper_prefix_is_prefix_match(n):
    r = SHIPPED.match_path(ROUTE1[:n])
    assert r.full is None
    assert "BirmStaf01" in r.prefix


@st.composite
def chain_networks(draw):
    n = draw(st.integers(min_value=2, max_value=8))
    junctions = [f"J{i}" for i in range(n)]
    lines = [f"J,{j}" for j in junctions]
    for i in range(n - 1):
        road = draw(st.sampled_from(["R1", "R2", "R3"]))
        lines.append(f"S,S{i},{junctions[i]},{junctions[i + 1]},{road},1.0")
    lines.append("P,Chain,chain," + ";".join(f"S{i}" for i in range(n - 1)))
    return n, "\n".join(lines)


@given(chain_networks())
def test_generated_chains_validate(case):
    n, text = case
    net = parse_network(text)
    assert net.match_path([f"S{i}" for i in range(n - 1)]).full == "Chain"
    assert net.path_junctions(net.journeys["Chain"].sections) == [f"J{i}" for i in range(n)]


def test_road_section_frozen():
    s = RoadSection("S", "A", "B", "R")
    with pytest.raises(AttributeError):
        s.road = "Q"
