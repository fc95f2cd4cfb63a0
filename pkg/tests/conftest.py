import math
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from cpsim.scene import Pose, SceneConfig, SensorSpec, generate_scene
from cpsim.topology import LinkSpec, MecGraph, NodeKind, NodeSpec

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

TINY_BOUNDS = (0.0, 0.0, 40.0, 30.0)


def tiny_sensor(infra=False, **kw):
    base = dict(channels=8, horizontal_resolution=2.0, range=40.0)
    base.update(kw)
    return SensorSpec.infrastructure(**base) if infra else SensorSpec.vehicle(**base)


def tiny_scene(seed=0, cars=4, pedestrians=3, keepouts=(), frame_index=0, ground_plane=True):
    cfg = SceneConfig(cars=cars, pedestrians=pedestrians, bounds=TINY_BOUNDS, keepouts=tuple(keepouts), ground_plane=ground_plane)
    return generate_scene(cfg, seed, frame_index=frame_index)


def star_graph(kinds, bandwidth=math.inf, capacity=math.inf, hub=NodeKind.DEEP_PERCEPTION_CLOUD):
    """Hub node 0 plus one sensing node per entry of ``kinds``, each linked to the hub."""
    nodes = [NodeSpec(0, hub, Pose(20.0, 15.0), None if hub is NodeKind.DEEP_PERCEPTION_CLOUD else tiny_sensor(True), capacity)]
    spots = [(8.0, 8.0), (32.0, 22.0), (8.0, 22.0), (32.0, 8.0), (20.0, 4.0), (20.0, 26.0), (4.0, 15.0)]
    for i, k in enumerate(kinds, start=1):
        x, y = spots[(i - 1) % len(spots)]
        sensor = None if k is NodeKind.CV else tiny_sensor(k.is_infrastructure)
        nodes.append(NodeSpec(i, k, Pose(x, y), sensor, capacity))
    links = [LinkSpec(i, 0, bandwidth) for i in range(1, len(kinds) + 1)]
    return MecGraph(tuple(nodes), tuple(links))


def keepouts_for(graph, radius=3.0):
    return tuple((n.pose.x, n.pose.y, radius) for n in graph.nodes)


@pytest.fixture
def small_world():
    g = star_graph([NodeKind.CENTRAL_PERCEPTION_INFRA, NodeKind.CPV])
    return g, tiny_scene(3, keepouts=keepouts_for(g))
