import datetime as dt
import math
import random
import re
from collections import Counter

import pytest

from conftest import ROUTE1, ROUTE1_MEANS
from trafficproc.gateway import AnprGateway
from trafficproc.simulator import (
    PERIOD_MS,
    LinkProfile,
    PlateGenerator,
    ProfileError,
    day_start_ms,
    format_ground_truth,
    generate,
    parse_profiles,
    random_plate,
)

DATE = dt.date(2013, 5, 1)


def flat_profiles(flow, period=32, means=ROUTE1_MEANS):
    return {
        (link, DATE, period): LinkProfile(link, DATE, period, mean, 60.0, mean / 60, flow)
        for link, mean in means.items()
    }


def test_parse_row():
    (p,) = parse_profiles(["LM1012,2013-05-01,32,224.32,95.1,5.9,120"]).values()
    assert p.avg_journey_time_s == 224.32 and p.flow == 120 and p.time_period == 32


def test_parse_empty_and_errors():
    assert parse_profiles([]) == {}
    with pytest.raises(ProfileError):
        parse_profiles(["LM1012,2013-05-01,32,-1,95.1,5.9,120"])
    with pytest.raises(ProfileError, match="duplicate"):
        parse_profiles(["LM1012,2013-05-01,32,224.32,95.1,5.9,120"] * 2)
    with pytest.raises(ProfileError, match="columns"):
        parse_profiles(["LM1012,2013-05-01,32"])
    with pytest.raises(ProfileError, match="period"):
        parse_profiles(["LM1012,2013-05-01,96,224.32,95.1,5.9,120"])


def test_shipped_dataset_row(profiles):
    p = profiles[("LM1012", DATE, 32)]
    assert (p.avg_journey_time_s, p.avg_speed_kph, p.link_length_km, p.flow) == (224.32, 95.1, 5.9, 120)
    for link, mean in ROUTE1_MEANS.items():
        assert profiles[(link, DATE, 0)].avg_journey_time_s == mean


def test_one_period_flow_100(network):
    sim = generate(network.journeys["BirmStaf01"], flat_profiles(100), network, date=DATE, periods=[32], seed=42)
    assert len(sim.ground_truth) == 100
    assert len(sim.detections) == 1500
    gw = AnprGateway(network)
    events = [e for d in sim.detections for e in gw.ingest(d)[0]]
    assert len(events) == 2800
    # Event times are the detection times, never ingestion times.
    det_times = {(d.plate, d.timestamp) for d in sim.detections}
    assert all((e.correlation.registration, e.timestamp) in det_times for e in events)


def test_cv_zero_exact(network):
    sim = generate(network.journeys["BirmStaf01"], flat_profiles(20), network, date=DATE, periods=[32], cv=0.0)
    for g in sim.ground_truth:
        for sid, t0, t1 in g.traversals():
            assert t1 - t0 == round(ROUTE1_MEANS[sid] * 1000)


def test_deterministic(network):
    a = generate(network.journeys["BirmStaf01"], flat_profiles(30), network, date=DATE, periods=[32], seed=9)
    b = generate(network.journeys["BirmStaf01"], flat_profiles(30), network, date=DATE, periods=[32], seed=9)
    assert a.detections == b.detections
    assert [format_ground_truth(g) for g in a.ground_truth] == [format_ground_truth(g) for g in b.ground_truth]


def test_detections_time_ordered_and_per_vehicle(network):
    sim = generate(network.journeys["BirmStaf01"], flat_profiles(50), network, date=DATE, periods=[32], seed=1)
    ts = [d.timestamp for d in sim.detections]
    assert ts == sorted(ts)
    assert set(Counter(d.plate for d in sim.detections).values()) == {len(ROUTE1) + 1}


def test_flow_enters_period(network, profiles):
    sim = generate(network.journeys["BirmStaf01"], profiles, network, date=DATE, seed=3)
    start = day_start_ms(DATE)
    per_period = Counter((g.crossings[0] - start) // PERIOD_MS for g in sim.ground_truth)
    for period in range(96):
        assert per_period.get(period, 0) == profiles[("LM1012", DATE, period)].flow


def test_sample_mean_converges(network):
    sim = generate(network.journeys["BirmStaf01"], flat_profiles(2000), network, date=DATE, periods=[32], seed=4)
    n = len(sim.ground_truth)
    for idx, sid in enumerate(ROUTE1):
        xs = [(g.crossings[idx + 1] - g.crossings[idx]) / 1000 for g in sim.ground_truth]
        mean = sum(xs) / n
        sd = math.sqrt(sum((x - mean) ** 2 for x in xs) / (n - 1))
        assert abs(mean - ROUTE1_MEANS[sid]) <= 4 * sd / math.sqrt(n)


def test_miss_injection(network):
    sim = generate(
        network.journeys["BirmStaf01"], flat_profiles(200), network, date=DATE, periods=[32], seed=5, miss_rate=0.05
    )
    assert len(sim.injected) == 10
    counts = Counter(d.plate for d in sim.detections)
    for g in sim.ground_truth:
        expected = len(ROUTE1) if g.missed_junction is not None else len(ROUTE1) + 1
        assert counts[g.plate] == expected
        if g.missed_junction is not None:
            assert 0 < g.missed_junction < len(ROUTE1)


def test_missing_profile(network):
    with pytest.raises(ProfileError, match="missing profile"):
        generate(network.journeys["BirmStaf01"], flat_profiles(5), network, date=DATE, periods=[33])


def test_plates():
    pat = re.compile(r"[A-Z]{2}[0-9]{2}[A-Z]{3}")
    a = [random_plate(random.Random(7)) for _ in range(3)]
    assert len(set(a)) == 1 and pat.fullmatch(a[0])
    gen = PlateGenerator(random.Random(8))
    plates = [gen() for _ in range(100_000)]
    assert len(set(plates)) == len(plates)
    assert all(pat.fullmatch(p) for p in plates[:1000])
    again = PlateGenerator(random.Random(8))
    assert [again() for _ in range(100)] == plates[:100]
