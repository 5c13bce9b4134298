from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from trafficproc.network import load_network, parse_network  # noqa: E402
from trafficproc.pipeline import data_path  # noqa: E402
from trafficproc.simulator import load_profiles  # noqa: E402

ROUTE1 = (
    "LM1012 LM1011 LM513A LM1052A LM1047A LM1045A LM1042A LM1040A "
    "LM1037A LM1036A LM1034A LM1033A LM928B AL3268"
).split()

# Published per-link dataset means in seconds.
ROUTE1_MEANS = {
    "LM1012": 224.32,
    "LM1011": 152.93,
    "LM513A": 36.07,
    "LM1052A": 37.13,
    "LM1047A": 37.95,
    "LM1045A": 83.93,
    "LM1042A": 241.88,
    "LM1040A": 40.06,
    "LM1037A": 180.17,
    "LM1036A": 215.23,
    "LM1034A": 78.93,
    "LM1033A": 36.47,
    "LM928B": 75.03,
    "AL3268": 112.63,
}

SMALL_NET = """\
J,M6J6,M6 J6
J,M6J5,M6 J5
J,M6J4A,M6 J4A
J,M42J8,M42 J8
J,M6T11,M6 T11
S,LM1012,M6J6,M6J5,M6,5.9,M6 J6 to M6 J5
S,LM1011,M6J5,M6J4A,M6,4.1
S,LM513A,M6J4A,M42J8,M42,1.0
S,LM1052A,M42J8,M6T11,M6T,1.0
P,BirmStaf01,Birmingham - Staffordshire,LM1012;LM1011;LM513A;LM1052A
"""

# One line per acceptance criterion, printed in the terminal summary.
ACCEPTANCE: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str = "") -> None:
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}"
    if detail:
        line += f"  ({detail})"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def net_path() -> Path:
    return data_path("birmingham_staffordshire.net")


@pytest.fixture(scope="session")
def dataset_path() -> Path:
    return data_path("highways_2013-05-01.csv")


@pytest.fixture
def network(net_path):
    # Fresh per test: discovery mode registers new journeys.
    return load_network(net_path)


@pytest.fixture
def small_network():
    return parse_network(SMALL_NET)


@pytest.fixture(scope="session")
def profiles(dataset_path):
    return load_profiles(dataset_path)


def split_area_map(network, cut: int = 8, areas=("ML", "NW")):
    """Route-1 junctions before ``cut`` in the first area, the rest in the second."""
    from trafficproc.topology import AreaMap

    path = network.path_junctions(ROUTE1)
    mapping = {j: areas[0] for j in network.junctions}
    for j in path[cut:]:
        mapping[j] = areas[1]
    return AreaMap(set(areas), mapping)
