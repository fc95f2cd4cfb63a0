"""Node graph, processing modes and the constraint side of topology design.

A plan assigns every node a processing mode and switches a subset of the
declared links on. It is feasible for a frame when each node's compute load
fits its capacity and each active link's payload fits its per-frame budget.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .scene import Pose, SensorSpec

RAW_POINT_BYTES = 12
DETECTION_BYTES = 64
BYTES_PER_MB = 1_000_000


class ProcessingMode(enum.IntEnum):
    RAW_PRESERVATION = 0
    FEATURE_EXTRACTION = 1
    BOUNDING_BOX = 2


class NodeKind(enum.Enum):
    CPV = "CPV"
    CV = "CV"
    CAV = "CAV"
    EDGE_PERCEPTION = "EdgePerception"
    CENTRAL_PERCEPTION_INFRA = "CentralPerceptionInfra"
    DEEP_PERCEPTION_CLOUD = "DeepPerceptionCloud"

    @property
    def is_mobile(self):
        return self in (NodeKind.CPV, NodeKind.CV, NodeKind.CAV)

    @property
    def is_infrastructure(self):
        return self in (NodeKind.EDGE_PERCEPTION, NodeKind.CENTRAL_PERCEPTION_INFRA)

    @property
    def tier(self):
        return _TIERS[self]

    @property
    def default_modes(self):
        return _ROLE_MODES[self]


_TIERS = {
    NodeKind.CV: 0,
    NodeKind.CPV: 0,
    NodeKind.CAV: 0,
    NodeKind.EDGE_PERCEPTION: 1,
    NodeKind.CENTRAL_PERCEPTION_INFRA: 2,
    NodeKind.DEEP_PERCEPTION_CLOUD: 3,
}

_M = ProcessingMode
# mobile nodes never ship raw data; CAVs and CVs only share object lists
_ROLE_MODES = {
    NodeKind.CPV: frozenset({_M.FEATURE_EXTRACTION, _M.BOUNDING_BOX}),
    NodeKind.CV: frozenset({_M.BOUNDING_BOX}),
    NodeKind.CAV: frozenset({_M.BOUNDING_BOX}),
    NodeKind.EDGE_PERCEPTION: frozenset(_M),
    NodeKind.CENTRAL_PERCEPTION_INFRA: frozenset(_M),
    NodeKind.DEEP_PERCEPTION_CLOUD: frozenset(_M),
}


@dataclass(frozen=True)
class CostModel:
    """Compute units per megabyte of node input, one rate per mode."""

    r0: float = 1.0
    r1: float = 4.0
    r2: float = 10.0

    def __post_init__(self):
        if not 0 <= self.r0 <= self.r1 <= self.r2:
            raise ValueError("cost rates must satisfy 0 <= r0 <= r1 <= r2")

    def rate(self, mode):
        return (self.r0, self.r1, self.r2)[int(mode)]


@dataclass(frozen=True)
class NodeSpec:
    id: int
    kind: NodeKind
    pose: Pose = Pose()
    sensor: SensorSpec | None = None
    compute_capacity: float = math.inf
    allowed_modes: frozenset = None

    def __post_init__(self):
        kind = NodeKind(self.kind)
        object.__setattr__(self, "kind", kind)
        modes = kind.default_modes if self.allowed_modes is None else self.allowed_modes
        modes = frozenset(ProcessingMode(m) for m in modes)
        if not modes:
            raise ValueError(f"node {self.id}: allowed_modes must be non-empty")
        if not modes <= kind.default_modes:
            bad = sorted(int(m) for m in modes - kind.default_modes)
            raise ValueError(f"node {self.id}: modes {bad} not allowed for {kind.value}")
        object.__setattr__(self, "allowed_modes", modes)
        if kind is NodeKind.CV and self.sensor is not None:
            raise ValueError(f"node {self.id}: CV nodes carry no perception sensor")
        if self.compute_capacity < 0:
            raise ValueError(f"node {self.id}: capacity must be non-negative")

    @property
    def cheapest_mode(self):
        return min(self.allowed_modes)

    def sensor_pose(self):
        """Pose of the sensor head: node pose lifted by the mount height."""
        p = self.pose
        return Pose(p.x, p.y, p.z + self.sensor.mount_height, p.roll, p.pitch, p.yaw)


@dataclass(frozen=True)
class LinkSpec:
    src: int
    dst: int
    bandwidth_bytes_per_frame: float = math.inf

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError(f"self-link on node {self.src}")
        if self.bandwidth_bytes_per_frame < 0:
            raise ValueError("bandwidth must be non-negative")

    @property
    def key(self):
        return (self.src, self.dst)


@dataclass(frozen=True)
class MecGraph:
    nodes: tuple
    links: tuple = ()
    engagement_schedule: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes, key=lambda n: n.id)))
        object.__setattr__(self, "links", tuple(sorted(self.links, key=lambda l: l.key)))
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("node ids must be unique")
        idset = set(ids)
        keys = [l.key for l in self.links]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate link")
        for l in self.links:
            if l.src not in idset or l.dst not in idset:
                raise ValueError(f"link {l.key} references an unknown node")
        sched = {int(f): frozenset(s) for f, s in dict(self.engagement_schedule).items()}
        for f, s in sched.items():
            if not s <= idset:
                raise ValueError(f"engagement at frame {f} names unknown nodes {sorted(s - idset)}")
        object.__setattr__(self, "engagement_schedule", sched)

    def node(self, nid):
        for n in self.nodes:
            if n.id == nid:
                return n
        raise KeyError(nid)

    def link(self, src, dst):
        for l in self.links:
            if l.key == (src, dst):
                return l
        raise KeyError((src, dst))

    @property
    def node_ids(self):
        return tuple(n.id for n in self.nodes)

    def active_at(self, frame_index):
        """Active node ids at a frame; frames absent from the schedule engage everyone."""
        return self.engagement_schedule.get(frame_index, frozenset(self.node_ids))


@dataclass(frozen=True)
class TopologyPlan:
    modes: dict
    flows: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "modes", {int(k): ProcessingMode(v) for k, v in sorted(dict(self.modes).items())})
        object.__setattr__(self, "flows", frozenset((int(a), int(b)) for a, b in self.flows))

    def __hash__(self):
        return hash(self.encoding())

    def encoding(self):
        """Canonical tuple used for deterministic tie-breaking."""
        return (tuple((k, int(v)) for k, v in self.modes.items()), tuple(sorted(self.flows)))

    def validate(self, graph):
        declared = {l.key for l in graph.links}
        unknown = sorted(self.flows - declared)
        if unknown:
            raise ValueError(f"flows {unknown} are not declared links")
        for n in graph.nodes:
            if n.id not in self.modes:
                raise ValueError(f"node {n.id} has no processing mode")
            if self.modes[n.id] not in n.allowed_modes:
                raise ValueError(f"node {n.id}: mode {int(self.modes[n.id])} not allowed")

    def restricted_to(self, active):
        active = set(active)
        return TopologyPlan(
            {k: v for k, v in self.modes.items() if k in active},
            frozenset(f for f in self.flows if f[0] in active and f[1] in active),
        )

    def to_document(self):
        return {
            "modes": {str(k): int(v) for k, v in self.modes.items()},
            "flows": [list(f) for f in sorted(self.flows)],
        }

    @classmethod
    def from_document(cls, doc):
        return cls({int(k): int(v) for k, v in doc["modes"].items()}, frozenset(tuple(f) for f in doc.get("flows", ())))

    @classmethod
    def no_flow(cls, graph):
        return cls({n.id: n.cheapest_mode for n in graph.nodes}, frozenset())


def node_compute_cost(mode, input_megabytes, cost=CostModel()):
    if input_megabytes < 0:
        raise ValueError("input volume must be non-negative")
    return cost.rate(mode) * input_megabytes


def link_data_volume(sender_mode, sender_output):
    """Bytes on a link for a sender in ``sender_mode``.

    ``sender_output`` counts what the mode emits: raw points, sifted feature
    cells, or detections.
    """
    mode = ProcessingMode(sender_mode)
    unit = {
        ProcessingMode.RAW_PRESERVATION: RAW_POINT_BYTES,
        ProcessingMode.FEATURE_EXTRACTION: 256,
        ProcessingMode.BOUNDING_BOX: DETECTION_BYTES,
    }[mode]
    return unit * int(sender_output)


@dataclass(frozen=True)
class FrameContext:
    """Measured per-frame volumes: input megabytes per node, bytes per flow."""

    node_input_mb: dict
    flow_bytes: dict


@dataclass(frozen=True)
class Violation:
    kind: str  # "node" or "link"
    where: object
    required: float
    available: float

    @property
    def deficit(self):
        return self.required - self.available

    def __str__(self):
        label = f"node {self.where}" if self.kind == "node" else f"link {self.where[0]}->{self.where[1]}"
        unit = "compute units" if self.kind == "node" else "bytes/frame"
        return f"{label} needs {self.required:g} {unit} but has {self.available:g} (deficit {self.deficit:g})"


def check_feasible(plan, graph, frame, cost=CostModel()):
    """List every violated compute or bandwidth constraint (empty when feasible)."""
    out = []
    for nid, mb in sorted(frame.node_input_mb.items()):
        node = graph.node(nid)
        need = node_compute_cost(plan.modes[nid], mb, cost)
        if need > node.compute_capacity:
            out.append(Violation("node", nid, need, node.compute_capacity))
    for key in sorted(plan.flows):
        sent = frame.flow_bytes.get(key, 0)
        cap = graph.link(*key).bandwidth_bytes_per_frame
        if sent > cap:
            out.append(Violation("link", key, sent, cap))
    return out


class InfeasiblePlanError(RuntimeError):
    def __init__(self, violations, frame_index=None):
        self.violations = list(violations)
        self.frame_index = frame_index
        where = "" if frame_index is None else f" at frame {frame_index}"
        super().__init__(f"infeasible plan{where}: {self.violations[0]}")


class NoFeasiblePlanError(RuntimeError):
    pass
