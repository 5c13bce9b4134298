import datetime as dt

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ROUTE1
from trafficproc.events import CLOSED, OPEN, CorrelationKey
from trafficproc.gateway import (
    DEFAULT_TTL_MS,
    AnprGateway,
    Detection,
    RejectReason,
    format_detection,
    parse_detection,
    read_detections,
)
from trafficproc.network import load_network
from trafficproc.pipeline import data_path

SHIPPED = load_network(data_path("birmingham_staffordshire.net"))

DAY = 1367366400000  # 2013-05-01T00:00Z


def det(plate, t, junction, area="ML"):
    return Detection(plate, t, area, junction)


def test_pair_emitted_at_end_junction(small_network):
    gw = AnprGateway(small_network, "BASU-ML")
    events, rej = gw.ingest(det("AB12CDE", DAY, "M6J6"))
    assert events == [] and rej is None
    assert len(gw) == 1
    events, rej = gw.ingest(det("AB12CDE", DAY + 224320, "M6J5"))
    assert rej is None
    opened, closed = events
    assert (opened.current_state, closed.current_state) == (OPEN, CLOSED)
    assert opened.activity_definition_id == closed.activity_definition_id == "LM1012"
    assert closed.timestamp - opened.timestamp == 224320
    assert opened.previous_state is None and closed.previous_state is OPEN
    assert opened.activity_instance_id == f"AB12CDE:2013-05-01:LM1012:{DAY}"
    assert opened.process_instance_id == "AB12CDE:2013-05-01"
    assert opened.event_id != closed.event_id
    assert opened.event_id.startswith("BASU-ML-")


def test_jump_without_section_rejected_and_poisons(small_network):
    gw = AnprGateway(small_network)
    gw.ingest(det("AB12CDE", DAY, "M6J6"))
    events, rej = gw.ingest(det("AB12CDE", DAY + 1000, "M42J8"))
    assert events == [] and rej.reason is RejectReason.NO_SECTION
    events, rej = gw.ingest(det("AB12CDE", DAY + 2000, "M6T11"))
    assert events == [] and rej.reason is RejectReason.POISONED


def test_equal_timestamps_rejected(small_network):
    gw = AnprGateway(small_network)
    gw.ingest(det("P1", DAY, "M6J6"))
    events, rej = gw.ingest(det("P1", DAY, "M6J5"))
    assert events == [] and rej.reason is RejectReason.NON_MONOTONIC


def test_unknown_camera(small_network):
    gw = AnprGateway(small_network)
    events, rej = gw.ingest(det("P1", DAY, "NOWHERE"))
    assert events == [] and rej.reason is RejectReason.UNKNOWN_CAMERA
    assert gw.dropped_unknown_camera == 1


def test_midnight_rollover_rejected(small_network):
    gw = AnprGateway(small_network)
    gw.ingest(det("P1", DAY - 100_000, "M6J6"))
    events, rej = gw.ingest(det("P1", DAY + 124_320, "M6J5"))
    assert events == []
    assert rej.reason is RejectReason.NON_MONOTONIC
    assert rej.journey_date == dt.date(2013, 5, 1)


def test_eviction(small_network):
    gw = AnprGateway(small_network)
    assert gw.evict_stale_trajectories(DAY, 30 * 60_000) == 0
    gw.ingest(det("P1", DAY, "M6J6"))
    assert gw.evict_stale_trajectories(DAY + 31 * 60_000, 30 * 60_000) == 1
    assert len(gw) == 0


def test_no_eviction_when_fresh(small_network):
    evicted = []
    gw = AnprGateway(small_network, on_evict=evicted.append)
    for i in range(1000):
        gw.ingest(det(f"P{i:04d}", DAY + i, "M6J6"))
    assert gw.evict_stale_trajectories(DAY + 1000 + 5 * 60_000, DEFAULT_TTL_MS) == 0
    assert evicted == []


def test_poisoned_key_silent_until_evicted(small_network):
    gw = AnprGateway(small_network)
    gw.ingest(det("P1", DAY, "M6J6"))
    gw.ingest(det("P1", DAY + 10, "M42J8"))
    gw.ingest(det("P1", DAY + 20, "M6T11"))
    assert gw.entry(CorrelationKey("P1", dt.date(2013, 5, 1))).poisoned
    gw.evict_stale_trajectories(DAY + 20 + DEFAULT_TTL_MS + 1)
    gw.ingest(det("P1", DAY + DEFAULT_TTL_MS + 100, "M6J6"))
    events, rej = gw.ingest(det("P1", DAY + DEFAULT_TTL_MS + 200, "M6J5"))
    assert rej is None and len(events) == 2


def test_detection_line_round_trip():
    d = det("AB12CDE", DAY, "M6J6")
    assert parse_detection(format_detection(d)) == d
    assert list(read_detections([format_detection(d) + "\n", "\n"])) == [d]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(min_value=1, max_value=400_000), min_size=len(ROUTE1), max_size=len(ROUTE1)))
def test_route_emits_two_events_per_section(durations):
    net = SHIPPED
    gw = AnprGateway(net)
    t = DAY + 3_600_000
    junctions = net.path_junctions(ROUTE1)
    out = []
    out += gw.ingest(det("AB12CDE", t, junctions[0]))[0]
    for j, d in zip(junctions[1:], durations):
        t += d
        out += gw.ingest(det("AB12CDE", t, j))[0]
    assert len(out) == 2 * len(ROUTE1)
    sections = [e.activity_definition_id for e in out[::2]]
    assert sections == ROUTE1
    for o, c in zip(out[::2], out[1::2]):
        assert c.timestamp > o.timestamp
        assert o.activity_instance_id == c.activity_instance_id


def test_journey_date_in_zone(small_network):
    gw = AnprGateway(small_network, tz="Europe/London")
    # 23:30 UTC on 30 April is 00:30 BST on 1 May.
    assert gw.journey_date(DAY - 30 * 60_000) == dt.date(2013, 5, 1)
    assert AnprGateway(small_network).journey_date(DAY - 30 * 60_000) == dt.date(2013, 4, 30)


def test_skew_guard(small_network):
    gw = AnprGateway(small_network, max_skew_ms=1000, clock=lambda: DAY)
    assert gw.ingest(det("P1", DAY + 5000, "M6J6")) == ([], None)
    assert gw.dropped_skew == 1


def test_bad_ttl(small_network):
    with pytest.raises(ValueError):
        AnprGateway(small_network).evict_stale_trajectories(DAY, 0)
