"""Event-driven journey analytics over ANPR detections.

Detections become lifecycle events per road section, events are correlated
into per-vehicle journeys, and journeys feed windowed time and flow metrics.
"""

from .correlation import CorrelationEngine, InstanceStatus, JourneyInstance
from .events import CorrelationKey, ExBpafEvent, LifecycleState, decode, encode
from .gateway import AnprGateway, Detection, RejectReason, Rejection
from .metrics import MetricSample, MetricsEngine, Threshold
from .network import JourneyDefinition, Junction, Road, RoadNetwork, RoadSection, load_network, parse_network
from .simulator import generate, load_profiles
from .stats import t_sf_two_sided, t_test_one_sample, t_test_paired
from .store import EventStore
from .topology import AreaMap, BasuNode, Cluster, GbasNode

__all__ = [
    "AnprGateway",
    "AreaMap",
    "BasuNode",
    "Cluster",
    "CorrelationEngine",
    "CorrelationKey",
    "Detection",
    "EventStore",
    "ExBpafEvent",
    "GbasNode",
    "InstanceStatus",
    "JourneyDefinition",
    "JourneyInstance",
    "Junction",
    "LifecycleState",
    "MetricSample",
    "MetricsEngine",
    "RejectReason",
    "Rejection",
    "Road",
    "RoadNetwork",
    "RoadSection",
    "Threshold",
    "decode",
    "encode",
    "generate",
    "load_network",
    "load_profiles",
    "parse_network",
    "t_sf_two_sided",
    "t_test_one_sample",
    "t_test_paired",
]
