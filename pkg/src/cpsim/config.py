"""YAML scenario documents: schema, validation and construction of run objects.

A document describes the scene generator, the node graph with its
engagement phases, the plan (explicit or solved), sifting settings, detector
and evaluation parameters, the seed and the output directory. Unknown keys
are rejected. ``version`` must equal :data:`SCHEMA_VERSION`.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, replace

import jsonschema
import yaml

from .dfs import FilterStrategy
from .evaluation import IOU_THRESHOLDS
from .fusion import DetectorParams, NmsConfig
from .scene import ObjectClass, PlacementRegion, Pose, SceneConfig, SensorSpec, three_intersection_config
from .simulator import Scenario, SimConfig
from .sweep import DEFAULT_BUDGETS, K_MAX
from .topology import CostModel, LinkSpec, MecGraph, NodeKind, NodeSpec, TopologyPlan

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Document failed schema or semantic validation."""


_num = {"type": "number"}
_opt_num = {"type": ["number", "null"]}
_int = {"type": "integer"}
_strategy = {"enum": [s.value for s in FilterStrategy]}
_class_map = {
    "type": "object",
    "additionalProperties": False,
    "properties": {c.value: {"type": "number", "exclusiveMinimum": 0} for c in ObjectClass},
}

_pose = {
    "type": "object",
    "additionalProperties": False,
    "properties": {k: _num for k in ("x", "y", "z", "roll", "pitch", "yaw")},
}

_sensor_fields = {
    "channels": {"type": "integer", "minimum": 1},
    "mount_height": _num,
    "range": {"type": "number", "exclusiveMinimum": 0},
    "rotation_hz": _num,
    "upper_fov": _num,
    "lower_fov": _num,
    "noise_std": {"type": "number", "minimum": 0},
    "dropoff_rate": {"type": "number", "minimum": 0, "maximum": 1},
    "dropoff_intensity": {"type": "number", "minimum": 0, "maximum": 1},
    "horizontal_resolution": {"type": "number", "exclusiveMinimum": 0},
}

_sensor = {
    "oneOf": [
        {"type": "null"},
        {"enum": ["vehicle", "infrastructure"]},
        {
            "type": "object",
            "additionalProperties": False,
            "properties": {"preset": {"enum": ["vehicle", "infrastructure"]}, **_sensor_fields},
        },
    ]
}

_region = {
    "type": "object",
    "additionalProperties": False,
    "required": ["xmin", "ymin", "xmax", "ymax"],
    "properties": {
        "xmin": _num,
        "ymin": _num,
        "xmax": _num,
        "ymax": _num,
        "yaws": {"type": "array", "items": _num},
    },
}

_bbox = {"type": "array", "items": _num, "minItems": 4, "maxItems": 4}
_extent = {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 3, "maxItems": 3}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "cpsim scenario",
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "seed", "scene", "graph", "plan"],
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "output_dir": {"type": "string"},
        "threads": {"type": "integer", "minimum": 1},
        "frames": {"type": "integer", "minimum": 0},
        "scene_pool": {"type": ["integer", "null"], "minimum": 1},
        "scene": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"enum": ["three_intersection", "custom"]},
                "cars": {"type": "integer", "minimum": 0},
                "pedestrians": {"type": "integer", "minimum": 0},
                "bounds": _bbox,
                "car_regions": {"type": "array", "items": _region},
                "pedestrian_regions": {"type": "array", "items": _region},
                "car_extent": _extent,
                "pedestrian_extent": _extent,
                "extent_jitter": {"type": "number", "minimum": 0, "maximum": 0.99},
                "keepouts": {"type": "array", "items": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}},
                "mobile_keepout_radius": {"type": "number", "minimum": 0},
                "ground_plane": {"type": "boolean"},
                "max_retries": {"type": "integer", "minimum": 1},
            },
        },
        "graph": {
            "type": "object",
            "additionalProperties": False,
            "required": ["nodes"],
            "properties": {
                "nodes": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["id", "kind"],
                        "properties": {
                            "id": _int,
                            "kind": {"enum": [k.value for k in NodeKind]},
                            "pose": _pose,
                            "sensor": _sensor,
                            "compute_capacity": {"type": ["number", "null"], "minimum": 0},
                            "allowed_modes": {"type": "array", "items": {"enum": [0, 1, 2]}, "minItems": 1},
                        },
                    },
                },
                "links": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["src", "dst"],
                        "properties": {"src": _int, "dst": _int, "bandwidth": {"type": ["number", "null"], "minimum": 0}},
                    },
                },
                "engagement": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["frames", "nodes"],
                        "properties": {
                            "frames": {"type": "integer", "minimum": 1},
                            "nodes": {"type": "array", "items": _int, "minItems": 1},
                            "label": {"type": "string"},
                        },
                    },
                },
            },
        },
        "plan": {
            "oneOf": [
                {"enum": ["solve:greedy", "solve:exhaustive"]},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["modes"],
                    "properties": {
                        "modes": {"type": "object", "patternProperties": {"^[0-9]+$": {"enum": [0, 1, 2]}}, "additionalProperties": False},
                        "flows": {"type": "array", "items": {"type": "array", "items": _int, "minItems": 2, "maxItems": 2}},
                    },
                },
            ]
        },
        "dfs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "strategy": _strategy,
                "stratified": {"type": "boolean"},
                "k_infrastructure": {"type": "integer", "minimum": 0},
                "k_mobile": {"type": "integer", "minimum": 0},
                "k_overrides": {"type": "object", "patternProperties": {"^[0-9]+$": {"type": "integer", "minimum": 0}}, "additionalProperties": False},
                "voxel_cap": {"type": ["integer", "null"], "minimum": 1},
                "cell_size": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 3, "maxItems": 3},
                "strategies": {"type": "array", "items": _strategy, "minItems": 1},
                "budgets": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "k_max": {"type": "integer", "minimum": 1},
            },
        },
        "detector": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "min_points": {"type": "integer", "minimum": 1},
                "score_halfpoint": {"type": "number", "exclusiveMinimum": 0},
                "base_jitter": {"type": "number", "minimum": 0},
                "yaw_jitter": {"type": "number", "minimum": 0},
                "clutter_rate": {"type": "number", "minimum": 0},
            },
        },
        "nms": _class_map,
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "thresholds": _class_map,
                "mp_population": {"enum": ["graph", "active"]},
            },
        },
        "cost": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"r0": {"type": "number", "minimum": 0}, "r1": {"type": "number", "minimum": 0}, "r2": {"type": "number", "minimum": 0}},
        },
        "backward": {"enum": ["mobile", "all", "none"]},
        "cv_self_report": {"type": "boolean"},
        "fusion_node": {"type": ["integer", "null"]},
    },
}


def _path_of(err):
    parts = [str(p) for p in err.absolute_path]
    return "/".join(parts) if parts else "<root>"


def validate_document(doc):
    """Raise :class:`ConfigError` naming the offending field on the first schema error."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        err = errors[0]
        if err.validator == "required":
            missing = [k for k in err.validator_value if k not in err.instance]
            raise ConfigError(f"missing required field {missing[0]!r} at {_path_of(err)}")
        if err.validator == "additionalProperties":
            raise ConfigError(f"unknown field at {_path_of(err)}: {err.message}")
        raise ConfigError(f"invalid value at {_path_of(err)}: {err.message}")


def load_document(path):
    with open(path, encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"could not parse {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    validate_document(doc)
    return doc


def dump_document(doc, path):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=True)


# -- builders -------------------------------------------------------------------


def _sensor(spec):
    if spec is None:
        return None
    if isinstance(spec, str):
        spec = {"preset": spec}
    spec = dict(spec)
    preset = spec.pop("preset", "vehicle")
    return SensorSpec.infrastructure(**spec) if preset == "infrastructure" else SensorSpec.vehicle(**spec)


def _cap(v):
    return math.inf if v is None else float(v)


def build_graph(doc, n_frames=None):
    g = doc["graph"]
    nodes = []
    for n in g["nodes"]:
        modes = n.get("allowed_modes")
        nodes.append(
            NodeSpec(
                int(n["id"]),
                NodeKind(n["kind"]),
                Pose(**n.get("pose", {})),
                _sensor(n.get("sensor")),
                _cap(n.get("compute_capacity")),
                None if modes is None else frozenset(modes),
            )
        )
    links = [LinkSpec(int(l["src"]), int(l["dst"]), _cap(l.get("bandwidth"))) for l in g.get("links", [])]
    schedule = {}
    phases = g.get("engagement")
    ids = frozenset(n.id for n in nodes)
    if phases:
        f = 0
        for ph in phases:
            for _ in range(ph["frames"]):
                schedule[f] = frozenset(ph["nodes"])
                f += 1
    else:
        for f in range(doc.get("frames", 1) if n_frames is None else n_frames):
            schedule[f] = ids
    return MecGraph(tuple(nodes), tuple(links), schedule)


def build_scene_config(doc, graph=None):
    s = dict(doc.get("scene", {}))
    preset = s.pop("preset", "three_intersection")
    radius = s.pop("mobile_keepout_radius", 3.0)
    keepouts = [tuple(k) for k in s.pop("keepouts", [])]
    if graph is not None and radius > 0:
        keepouts += [(n.pose.x, n.pose.y, radius) for n in graph.nodes if n.kind.is_mobile]
    for key in ("car_regions", "pedestrian_regions"):
        if key in s:
            s[key] = tuple(PlacementRegion(r["xmin"], r["ymin"], r["xmax"], r["ymax"], tuple(r.get("yaws", ()))) for r in s[key])
    for key in ("bounds", "car_extent", "pedestrian_extent"):
        if key in s:
            s[key] = tuple(s[key])
    if preset == "three_intersection":
        return replace(three_intersection_config(keepouts=tuple(keepouts)), **s)
    return SceneConfig(keepouts=tuple(keepouts), **s)


def _class_dict(m, default):
    out = dict(default)
    for k, v in (m or {}).items():
        out[ObjectClass(k)] = float(v)
    return out


def build_sim_config(doc):
    d = doc.get("dfs", {})
    ev = doc.get("eval", {})
    kwargs = dict(
        strategy=FilterStrategy.parse(d.get("strategy", "random_priority")),
        stratified=d.get("stratified", True),
        k_infrastructure=d.get("k_infrastructure", 15_000),
        k_mobile=d.get("k_mobile", 15_000),
        k_overrides={int(k): int(v) for k, v in d.get("k_overrides", {}).items()},
        detector=DetectorParams(**doc.get("detector", {})),
        nms=NmsConfig(_class_dict(doc.get("nms"), NmsConfig().radius_per_class)),
        thresholds=_class_dict(ev.get("thresholds"), IOU_THRESHOLDS),
        cost=CostModel(**doc.get("cost", {})),
        backward=doc.get("backward", "mobile"),
        cv_self_report=doc.get("cv_self_report", False),
        fusion_node=doc.get("fusion_node"),
        mp_population=ev.get("mp_population", "graph"),
    )
    if "voxel_cap" in d:
        kwargs["voxel_cap"] = d["voxel_cap"]
    if "cell_size" in d:
        kwargs["cell_size"] = tuple(d["cell_size"])
    return SimConfig(**kwargs)


def build_plan(doc, graph):
    p = doc["plan"]
    if isinstance(p, str):
        return None, p.split(":", 1)[1]
    plan = TopologyPlan.from_document(p)
    try:
        plan.validate(graph)
    except ValueError as exc:
        raise ConfigError(f"plan: {exc}") from exc
    return plan, None


@dataclass(frozen=True)
class ScenarioConfig:
    """A validated document turned into run objects."""

    document: dict
    scenario: Scenario
    plan_solver: str | None  # "greedy" | "exhaustive" when the plan is solved
    strategies: tuple
    budgets: tuple
    k_max: int
    output_dir: str
    threads: int

    @property
    def seed(self):
        return self.scenario.seed


def build(doc, seed=None, output_dir=None, threads=None):
    """Validate ``doc`` (after applying overrides) and build a :class:`ScenarioConfig`."""
    doc = copy.deepcopy(doc)
    if seed is not None:
        doc["seed"] = seed
    if output_dir is not None:
        doc["output_dir"] = output_dir
    if threads is not None:
        doc["threads"] = threads
    validate_document(doc)
    try:
        graph = build_graph(doc)
        scene_cfg = build_scene_config(doc, graph)
        sim = build_sim_config(doc)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    plan, solver = build_plan(doc, graph)
    if plan is None:
        plan = TopologyPlan.no_flow(graph)
    scenario = Scenario(graph, plan, scene_cfg, sim, int(doc["seed"]), doc.get("scene_pool"), solver)
    d = doc.get("dfs", {})
    strategies = tuple(FilterStrategy.parse(s) for s in d.get("strategies", [s.value for s in FilterStrategy]))
    return ScenarioConfig(
        doc,
        scenario,
        solver,
        strategies,
        tuple(d.get("budgets", DEFAULT_BUDGETS)),
        int(d.get("k_max", K_MAX)),
        doc.get("output_dir", "cpsim_out"),
        int(doc.get("threads", 1)),
    )


def load(path, **overrides):
    return build(load_document(path), **overrides)


# -- default scenario -----------------------------------------------------------


def default_document(frames=20, seed=0):
    """Three intersections watched by one DPC, two CPIs and three CPVs.

    All sensing nodes send features to the DPC. Suitable as a starting point
    for hand-edited configs.
    """
    nodes = [
        {"id": 0, "kind": "DeepPerceptionCloud", "pose": {"x": 140.0, "y": 60.0}, "sensor": None},
        {"id": 1, "kind": "CentralPerceptionInfra", "pose": {"x": 57.0, "y": 51.0}, "sensor": "infrastructure"},
        {"id": 2, "kind": "CentralPerceptionInfra", "pose": {"x": 223.0, "y": 29.0}, "sensor": "infrastructure"},
        {"id": 3, "kind": "CPV", "pose": {"x": 105.0, "y": 37.0}, "sensor": "vehicle"},
        {"id": 4, "kind": "CPV", "pose": {"x": 165.0, "y": 43.0, "yaw": math.pi}, "sensor": "vehicle"},
        {"id": 5, "kind": "CPV", "pose": {"x": 195.0, "y": 37.0}, "sensor": "vehicle"},
    ]
    return {
        "version": SCHEMA_VERSION,
        "seed": seed,
        "output_dir": "cpsim_out",
        "frames": frames,
        "scene": {"preset": "three_intersection", "cars": 40, "pedestrians": 30, "mobile_keepout_radius": 3.0},
        "graph": {
            "nodes": nodes,
            "links": [{"src": i, "dst": 0, "bandwidth": None} for i in range(1, 6)],
        },
        "plan": {"modes": {str(i): 1 for i in range(6)}, "flows": [[i, 0] for i in range(1, 6)]},
        "dfs": {"strategy": "random_priority", "k_infrastructure": 15000, "k_mobile": 15000},
    }


def node_addition_phases(frames_per_phase, infra=(1, 2), mobile=(3, 4, 5), fusion=0):
    """Engagement phases covering every Infra@i / Vehi@v combination (i >= 1)."""
    phases = []
    for i in range(1, len(infra) + 1):
        for v in range(len(mobile) + 1):
            nodes = [fusion, *infra[:i], *mobile[:v]]
            phases.append({"frames": frames_per_phase, "nodes": nodes, "label": f"Infra.@{i}/Vehi.@{v}"})
    return phases
