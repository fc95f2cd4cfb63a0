"""Per-frame execution of a topology plan over the node graph.

Each active sensor node senses and moves its cloud into the global frame.
Nodes are then visited in flow order: a node merges what it sensed with what
it received, processes the bundle according to its mode and forwards the
result along its active flows. The fusion node runs the detector over
whatever reaches it and suppresses duplicates with circle-NMS; results are
then pushed back to subscribed nodes.
"""

from __future__ import annotations

import csv
import heapq
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from ._rng import derive_seed
from .dfs import FilterStrategy, sift
from .evaluation import IOU_THRESHOLDS, EvalFrame, evaluate, frame_overall_ap
from .feature import DEFAULT_CELL_SIZE, DEFAULT_VOXEL_CAP, VoxelGridSpec, deck_union, voxelize
from .fusion import CLASS_EXTENTS, Detection, DetectorParams, NmsConfig, circle_nms, early_fuse, surrogate_detect
from .scene import ObjectClass, generate_scene, points_on_object, simulate_lidar, transform_to_grc
from .topology import (
    BYTES_PER_MB,
    DETECTION_BYTES,
    RAW_POINT_BYTES,
    CostModel,
    FrameContext,
    InfeasiblePlanError,
    MecGraph,
    NodeKind,
    ProcessingMode,
    check_feasible,
    node_compute_cost,
)

__all__ = [
    "MecGraph",
    "SimConfig",
    "Message",
    "SensedFrame",
    "FrameResult",
    "Scenario",
    "ScenarioResult",
    "sense",
    "execute_frame",
    "run_frame",
    "run_scenario",
    "message_complexity",
    "forward_backward_bound",
    "combination_label",
    "write_message_log",
    "read_message_log",
]


@dataclass(frozen=True)
class SimConfig:
    strategy: FilterStrategy = FilterStrategy.RANDOM_PRIORITY
    stratified: bool = True
    k_infrastructure: int = 15_000
    k_mobile: int = 15_000
    k_overrides: dict = field(default_factory=dict)
    voxel_cap: int = DEFAULT_VOXEL_CAP
    cell_size: tuple = DEFAULT_CELL_SIZE
    detector: DetectorParams = DetectorParams()
    nms: NmsConfig = NmsConfig()
    thresholds: dict = field(default_factory=lambda: dict(IOU_THRESHOLDS))
    cost: CostModel = CostModel()
    backward: str = "mobile"  # which nodes receive fused results: mobile | all | none
    cv_self_report: bool = False
    fusion_node: int | None = None
    # whose raw clouds define the labelled objects (MP >= 1): every sensor in
    # the graph ("graph") or only the engaged ones ("active")
    mp_population: str = "graph"

    def __post_init__(self):
        object.__setattr__(self, "strategy", FilterStrategy.parse(self.strategy))
        if self.backward not in ("mobile", "all", "none"):
            raise ValueError(f"backward must be mobile, all or none; got {self.backward!r}")
        if self.mp_population not in ("graph", "active"):
            raise ValueError(f"mp_population must be graph or active; got {self.mp_population!r}")

    def k_for(self, node):
        if node.id in self.k_overrides:
            return int(self.k_overrides[node.id])
        return self.k_mobile if node.kind.is_mobile else self.k_infrastructure


@dataclass(frozen=True)
class Message:
    frame: int
    src: int
    dst: int
    bytes: int
    kind: str


@dataclass(frozen=True)
class SensedFrame:
    """Global-frame clouds of every sensing node for one scene.

    Sensing does not depend on the plan, so one of these can back many plan
    evaluations of the same frame.
    """

    scene: object
    clouds: dict  # node id -> PointCloud (global)
    object_points: dict  # node id -> {object id: points on object}

    def mp_counts(self, active):
        counts = {o.id: 0 for o in self.scene.objects}
        for nid, per_obj in self.object_points.items():
            if nid in active:
                for oid, c in per_obj.items():
                    counts[oid] += c
        return counts


def sense(graph, scene, seed, nodes=None):
    """Simulate every sensor node (or the subset ``nodes``) on ``scene``."""
    clouds, object_points = {}, {}
    for node in graph.nodes:
        if node.sensor is None or (nodes is not None and node.id not in nodes):
            continue
        pose = node.sensor_pose()
        ego = simulate_lidar(node.sensor, pose, scene, derive_seed(seed, "sensor", node.id, scene.frame_index))
        cloud = transform_to_grc(ego, pose)
        clouds[node.id] = cloud
        object_points[node.id] = {o.id: points_on_object(cloud, o, node.sensor.noise_std) for o in scene.objects}
    return SensedFrame(scene, clouds, object_points)


@dataclass
class FrameResult:
    frame_index: int
    final_detections: list
    message_log: list
    per_node_cost: dict
    fusion_node: int | None = None
    active: frozenset = frozenset()
    mp_counts: dict = field(default_factory=dict)
    context: FrameContext | None = None
    scene: object = None
    intermediates: dict | None = None

    def eval_frame(self):
        return EvalFrame(tuple(self.final_detections), tuple(self.scene.objects), dict(self.mp_counts))

    def overall_ap(self, thresholds=IOU_THRESHOLDS):
        return frame_overall_ap(self.eval_frame(), thresholds)

    @property
    def total_bytes(self):
        return sum(m.bytes for m in self.message_log)


def _flow_order(active, flows):
    succ = {n: [] for n in active}
    indeg = {n: 0 for n in active}
    for a, b in sorted(flows):
        succ[a].append(b)
        indeg[b] += 1
    ready = [n for n in active if indeg[n] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for m in succ[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                heapq.heappush(ready, m)
    if len(order) != len(active):
        raise ValueError("plan flows contain a cycle")
    return order


def select_fusion_node(graph, active, flows, has_data, override=None):
    """Highest-tier active node; ties favour more inbound flows, then held data, then lower id.

    The choice depends on the engaged set and the flows only, so switching a
    flow on never moves fusion away from data it already had.
    """
    if override is not None:
        return override if override in active else None
    if not active:
        return None
    inbound = {}
    for _, b in flows:
        inbound[b] = inbound.get(b, 0) + 1
    best = max((graph.node(n) for n in active), key=lambda n: (n.kind.tier, inbound.get(n.id, 0), n.id in has_data, -n.id))
    return best.id


def _payload_bytes(raw, deck, dets):
    return (
        RAW_POINT_BYTES * (len(raw) if raw is not None else 0)
        + 256 * (len(deck) if deck is not None else 0)
        + DETECTION_BYTES * len(dets)
    )


def _payload_kind(raw, deck, dets):
    parts = [
        name
        for name, present in (("raw", raw is not None and len(raw)), ("feature", deck is not None and len(deck)), ("objects", dets))
        if present
    ]
    return parts[0] if len(parts) == 1 else "mixed"


def _self_report(node):
    ext = CLASS_EXTENTS[ObjectClass.CAR]
    p = node.pose
    return Detection(ObjectClass.CAR, (p.x, p.y, p.z + ext[2] / 2), ext, p.yaw, 1.0, node.id)


def execute_frame(graph, plan, scene, config=SimConfig(), seed=0, active=None, sensed=None, keep_intermediates=False):
    """Run one frame and return ``(FrameResult, violations)`` without raising on infeasibility."""
    frame = scene.frame_index
    active = frozenset(graph.active_at(frame) if active is None else active)
    for a, b in sorted(plan.flows):
        if a not in active or b not in active:
            raise ValueError(f"flow {a}->{b} references an inactive node at frame {frame}")
    for nid in active:
        if nid not in plan.modes:
            raise ValueError(f"node {nid} has no processing mode")
    population = frozenset(graph.node_ids) if config.mp_population == "graph" else active
    if sensed is None:
        sensed = sense(graph, scene, seed, nodes=population | active)
    elif not (population | active) <= set(sensed.clouds) | {n.id for n in graph.nodes if n.sensor is None}:
        raise ValueError("sensed frame lacks clouds for some required sensor nodes")
    grid = VoxelGridSpec.for_bounds(scene.bounds, config.cell_size)
    own = {nid: sensed.clouds[nid] for nid in active if nid in sensed.clouds}
    mp_counts = sensed.mp_counts(population)
    has_data = set(own)
    if config.cv_self_report:
        has_data |= {n for n in active if graph.node(n).kind is NodeKind.CV}
    fusion = select_fusion_node(graph, active, plan.flows, has_data, config.fusion_node)

    order = _flow_order(sorted(active), plan.flows)
    inbox = {n: [] for n in active}
    log, flow_bytes, input_mb, costs = [], {}, {}, {}
    fusion_state = None
    final = []
    for nid in order:
        node = graph.node(nid)
        mode = plan.modes[nid]
        raws = [own[nid]] if nid in own else []
        decks, dets = [], []
        in_bytes = RAW_POINT_BYTES * len(own[nid]) if nid in own else 0
        for msg, (r, d, o) in inbox[nid]:
            in_bytes += msg.bytes
            if r is not None:
                raws.append(r)
            if d is not None:
                decks.append(d)
            dets.extend(o)
        if node.kind is NodeKind.CV and config.cv_self_report:
            dets.append(_self_report(node))
        input_mb[nid] = in_bytes / BYTES_PER_MB
        costs[nid] = node_compute_cost(mode, input_mb[nid], config.cost)

        raw = early_fuse(raws) if raws else None
        deck = deck_union(decks, owner=nid) if decks else None
        if mode is ProcessingMode.FEATURE_EXTRACTION and raw is not None:
            mine = voxelize(raw, grid, nid, config.voxel_cap)
            sift_seed = derive_seed(seed, "sift", nid, frame)
            mine = sift(mine, config.strategy, config.k_for(node), (node.pose.x, node.pose.y), sift_seed, config.stratified)
            deck = mine if deck is None else deck_union([mine, deck], owner=nid)
            raw = None
        elif mode is ProcessingMode.BOUNDING_BOX and (raw is not None or deck is not None):
            fused = _fuse_to_deck(raw, deck, grid, nid, config)
            dets = dets + surrogate_detect(fused, scene, config.detector, derive_seed(seed, "detect", frame))
            raw = deck = None

        if nid == fusion:
            fused = _fuse_to_deck(raw, deck, grid, nid, config) if (raw is not None or deck is not None) else None
            # keyed by frame only: moving the fusion site must not reshuffle box noise
            detect_seed = derive_seed(seed, "detect", frame)
            if keep_intermediates:
                fusion_state = {"deck": fused, "object_lists": list(dets), "detect_seed": detect_seed}
            if fused is not None:
                dets = dets + surrogate_detect(fused, scene, config.detector, detect_seed)
            final = circle_nms(dets, config.nms)
            continue

        for a, b in sorted(plan.flows):
            if a != nid:
                continue
            nbytes = _payload_bytes(raw, deck, dets)
            flow_bytes[(a, b)] = nbytes
            if nbytes == 0:
                continue
            msg = Message(frame, a, b, nbytes, _payload_kind(raw, deck, dets))
            log.append(msg)
            inbox[b].append((msg, (raw, deck, list(dets))))

    # results go back only from a real fusion site, one that received flows
    fed = any(b == fusion for _, b in plan.flows)
    if fusion is not None and fed and final and config.backward != "none":
        for nid in sorted(active):
            if nid == fusion:
                continue
            if config.backward == "all" or graph.node(nid).kind.is_mobile:
                log.append(Message(frame, fusion, nid, DETECTION_BYTES * len(final), "backward"))

    context = FrameContext(input_mb, flow_bytes)
    violations = check_feasible(plan.restricted_to(active), graph, context, config.cost)
    result = FrameResult(
        frame,
        final,
        log,
        costs,
        fusion,
        active,
        mp_counts,
        context,
        scene,
        fusion_state,
    )
    return result, violations


def _fuse_to_deck(raw, deck, grid, owner, config):
    parts = []
    if raw is not None:
        parts.append(voxelize(raw, grid, owner, config.voxel_cap))
    if deck is not None:
        parts.append(deck)
    return deck_union(parts, owner=owner)


def run_frame(graph, plan, scene, config=SimConfig(), seed=0, active=None, sensed=None, keep_intermediates=False):
    """Execute one frame; raises :class:`InfeasiblePlanError` on a violated constraint."""
    result, violations = execute_frame(graph, plan, scene, config, seed, active, sensed, keep_intermediates)
    if violations:
        raise InfeasiblePlanError(violations, scene.frame_index)
    return result


def message_complexity(logs):
    """Largest number of messages sent in any single frame."""
    return max((len(log) for log in logs), default=0)


def forward_backward_bound(n_active):
    return max(2 * (n_active - 1), 0)


def combination_label(graph, active):
    n_infra = sum(1 for n in active if graph.node(n).kind.is_infrastructure)
    n_mobile = sum(1 for n in active if graph.node(n).kind.is_mobile and graph.node(n).sensor is not None)
    return f"Infra.@{n_infra}/Vehi.@{n_mobile}"


# -- scenarios ----------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    graph: MecGraph
    plan: object  # TopologyPlan
    scene_config: object  # SceneConfig
    config: SimConfig = SimConfig()
    seed: int = 0
    # when set, frame f replays scene f % scene_pool (fresh sensor noise)
    scene_pool: int | None = None
    resolve: str | None = None  # re-solve the plan per engagement set: greedy | exhaustive

    @property
    def frames(self):
        return sorted(self.graph.engagement_schedule)

    def scene_for(self, frame):
        idx = frame if not self.scene_pool else frame % self.scene_pool
        return generate_scene(self.scene_config, derive_seed(self.seed, "scene", idx), frame_index=frame)


@dataclass
class GroupResult:
    key: tuple
    label: str
    frames: list
    report: object  # ApReport
    mean_frame_ap: float


@dataclass
class ScenarioResult:
    frames: list
    groups: list
    plans: dict = field(default_factory=dict)  # engaged node set -> plan used

    def to_dict(self):
        return {
            "frames": [
                {
                    "frame": fr.frame_index,
                    "active": sorted(fr.active),
                    "fusion_node": fr.fusion_node,
                    "detections": len(fr.final_detections),
                    "messages": len(fr.message_log),
                    "bytes": fr.total_bytes,
                    "overall_ap": fr.overall_ap(),
                }
                for fr in self.frames
            ],
            "groups": [
                {
                    "nodes": list(g.key),
                    "label": g.label,
                    "frames": g.frames,
                    "mean_frame_ap": g.mean_frame_ap,
                    "report": g.report.to_dict(),
                }
                for g in self.groups
            ],
            "max_messages_per_frame": message_complexity([fr.message_log for fr in self.frames]),
        }


def _plans_per_group(scenario):
    plans = {}
    for f in scenario.frames:
        active = scenario.graph.active_at(f)
        if active in plans:
            continue
        if scenario.resolve is None:
            plans[active] = scenario.plan.restricted_to(active)
        else:
            from .solvers import solve_exhaustive, solve_greedy, subgraph

            sub = subgraph(scenario.graph, active)
            scenes = [scenario.scene_for(f)]
            solver = solve_greedy if scenario.resolve == "greedy" else solve_exhaustive
            plans[active] = solver(sub, scenes, scenario.seed, scenario.config)
    return plans


def run_scenario(scenario, threads=1):
    """Run every scheduled frame and group results by the set of engaged nodes."""
    frames = scenario.frames
    if not frames:
        return ScenarioResult([], [], {})
    plans = _plans_per_group(scenario)
    graph = scenario.graph

    def one(f):
        active = graph.active_at(f)
        try:
            return run_frame(graph, plans[active], scenario.scene_for(f), scenario.config, scenario.seed, active)
        except InfeasiblePlanError:
            raise
        except Exception as exc:
            raise RuntimeError(f"frame {f}: {exc}") from exc

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, frames))
    else:
        results = [one(f) for f in frames]

    grouped = {}
    for fr in results:
        grouped.setdefault(tuple(sorted(fr.active)), []).append(fr)
    groups = []
    for key, frs in grouped.items():
        evs = [fr.eval_frame() for fr in frs]
        report = evaluate(evs, scenario.config.thresholds)
        mean_ap = sum(frame_overall_ap(e, scenario.config.thresholds) for e in evs) / len(evs)
        groups.append(GroupResult(key, combination_label(graph, key), [fr.frame_index for fr in frs], report, mean_ap))
    return ScenarioResult(results, groups, plans)


def write_message_log(path, frames):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "from", "to", "bytes", "kind"])
        for fr in frames:
            for m in fr.message_log:
                w.writerow([m.frame, m.src, m.dst, m.bytes, m.kind])


def read_message_log(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            Message(int(r["frame"]), int(r["from"]), int(r["to"]), int(r["bytes"]), r["kind"])
            for r in csv.DictReader(fh)
        ]


def write_scenario_result(path, result):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
