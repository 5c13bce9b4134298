import datetime as dt
import shutil
import threading
import time

import pytest

from conftest import ROUTE1, split_area_map
from trafficproc.correlation import InstanceStatus
from trafficproc.events import CorrelationKey
from trafficproc.gateway import Detection
from trafficproc.network import load_network
from trafficproc.simulator import generate
from trafficproc.topology import (
    AreaMap,
    Backpressure,
    Channel,
    Cluster,
    GbasNode,
    RoutingError,
    load_area_map,
    route_detection,
    stitch_cross_area,
)

DATE = dt.date(2013, 5, 1)


def test_route_to_midlands(net_path):
    amap = load_area_map(net_path)
    d = Detection("AB12CDE", 0, "ML", "M6J6")
    assert route_detection(d, amap) == "BASU-ML"
    assert route_detection(d._replace(timestamp=5), amap) == "BASU-ML"
    with pytest.raises(RoutingError):
        route_detection(d._replace(camera_id="NOWHERE"), amap)


def test_unmapped_detection_counted(network):
    cluster = Cluster(network)
    assert cluster.submit(Detection("AB12CDE", 0, "ML", "NOWHERE")) is None
    assert cluster.dropped_unrouted == 1
    assert cluster.submit(Detection("AB12CDE", 0, "ML", "M6J6")) == "BASU-ALL"
    assert cluster.routed == 1


def test_area_map_violations(network):
    amap = AreaMap({"ML"}, {"M6J6": "ML", "M6J5": "XX"})
    problems = amap.violations(network)
    assert any("has no area" in p for p in problems)
    assert any("unknown area XX" in p for p in problems)
    with pytest.raises(RoutingError):
        Cluster(network, amap)


def _sim(network, profiles, periods=(32,), seed=3):
    return generate(network.journeys["BirmStaf01"], profiles, network, date=DATE, periods=list(periods), seed=seed)


def test_split_equals_single_node(network, net_path, profiles):
    sim = _sim(network, profiles)
    single = Cluster(network)
    single.run(sim.detections)
    single.flush()
    # Slices get registered on the network, so the split run gets its own.
    net2 = load_network(net_path)
    split = Cluster(net2, split_area_map(net2))
    split.run(sim.detections)
    split.flush()
    pids = [f"{g.plate}:{DATE}" for g in sim.ground_truth]
    for pid in pids:
        assert split.journey_time_ms(pid) == single.journey_time_ms(pid)
    assert set(split.gbas.instances) == set(pids)
    assert all(split.outcomes()[p] == (InstanceStatus.COMPLETED, "BirmStaf01") for p in pids)
    # Local fragments are not whole journeys.
    assert {d for _, d, _ in split.completed_journeys()} == {"BirmStaf01"}


def test_single_area_journey_skips_gbas(network, net_path, profiles):
    cluster = Cluster(network, load_area_map(net_path))
    cluster.run(_sim(network, profiles).detections)
    cluster.flush()
    assert cluster.gbas.instances == {}


def test_stitch_reversed_fragments(network, profiles):
    amap = split_area_map(network)
    sim = _sim(network, profiles)
    cluster = Cluster(network, amap)
    fragments = {}
    gbas = cluster.gbas
    orig = gbas.record_fragment

    def capture(node_id, local_def, events):
        fragments.setdefault(events[0].correlation, []).append(events)
        orig(node_id, local_def, events)

    gbas.record_fragment = capture
    sightings = {}
    orig_s = gbas.record_sighting

    def capture_s(key, junction, t):
        sightings.setdefault(key, []).append((junction, t))
        return orig_s(key, junction, t)

    gbas.record_sighting = capture_s
    cluster.run(sim.detections)
    cluster.flush()
    key = next(iter(fragments))
    forward = stitch_cross_area(key, fragments[key], sightings[key], network, amap)
    backward = stitch_cross_area(key, list(reversed(fragments[key])), sightings[key], network, amap)
    assert forward.status is InstanceStatus.COMPLETED
    assert forward.path == backward.path == ROUTE1
    assert [s.duration_ms for s in forward.samples] == [s.duration_ms for s in backward.samples]


def test_boundary_sightings(network):
    amap = split_area_map(network)
    gbas = GbasNode(network, amap)
    key = CorrelationKey("AB12CDE", DATE)
    boundary = network.path_junctions(ROUTE1)[7]
    assert gbas.record_sighting(key, boundary, 100)
    assert not gbas.record_sighting(key, boundary, 100)
    assert gbas.sighting_duplicates == 1
    with pytest.raises(ValueError):
        gbas.record_sighting(key, "M6J6", 50)


def test_store_isolation(tmp_path, network, profiles):
    amap = split_area_map(network)
    sim = _sim(network, profiles)
    cluster = Cluster(network, amap, store_root=tmp_path)
    cluster.run(sim.detections)
    cluster.flush()
    pid = f"{sim.ground_truth[0].plate}:{DATE}"
    nw = cluster.nodes["BASU-NW"]
    before = nw.read_stream(pid)
    cluster.nodes["BASU-ML"].close()
    shutil.rmtree(tmp_path / "BASU-ML")
    assert nw.read_stream(pid) == before
    assert len(before) == 2 * (len(ROUTE1) - 8)
    cluster.close()


def test_threaded_cluster_matches_sync(network, profiles):
    sim = _sim(network, profiles)
    a = Cluster(network)
    a.run(sim.detections)
    a.flush()
    b = Cluster(network, threaded=True, capacity=64)
    b.run(sim.detections)
    b.flush()
    b.close()
    assert a.metric_engines()[0].metric_rows() == b.metric_engines()[0].metric_rows()


def test_channel_backpressure():
    gate = threading.Event()
    ch = Channel(lambda line: gate.wait(), threaded=True, capacity=1, send_timeout=0.05)
    ch.send("a")
    time.sleep(0.05)
    ch.send("b")
    with pytest.raises(Backpressure):
        ch.send("c")
    gate.set()
    ch.close()
