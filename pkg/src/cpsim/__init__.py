"""Desk-scale simulator for cooperative perception over a mobile-edge-cloud node graph.

LiDAR-equipped vehicles and roadside units sense a synthetic scene, share raw
points, sifted feature cells or object lists along a planned topology, and a
fusion node produces the final detections that are scored with BEV-IoU AP.
"""

from .dfs import FilterStrategy, budget_to_cells, sift
from .evaluation import ApReport, bev_iou, evaluate, match_and_score
from .feature import FeatureDeck, VoxelGridSpec, voxelize
from .fusion import Detection, DetectorParams, NmsConfig, circle_nms, surrogate_detect
from .scene import (
    GroundTruthObject,
    ObjectClass,
    PointCloud,
    Pose,
    Scene,
    SceneConfig,
    SensorSpec,
    generate_scene,
    simulate_lidar,
    transform_to_ego,
    transform_to_grc,
)
from .simulator import Scenario, SimConfig, run_frame, run_scenario
from .solvers import evaluate_objective, solve_exhaustive, solve_greedy
from .sweep import TradeoffCurve, sweep_budget
from .topology import (
    CostModel,
    LinkSpec,
    MecGraph,
    NodeKind,
    NodeSpec,
    ProcessingMode,
    TopologyPlan,
    check_feasible,
)

__version__ = "0.1.0"

__all__ = [
    "ApReport",
    "CostModel",
    "Detection",
    "DetectorParams",
    "FeatureDeck",
    "FilterStrategy",
    "GroundTruthObject",
    "LinkSpec",
    "MecGraph",
    "NmsConfig",
    "NodeKind",
    "NodeSpec",
    "ObjectClass",
    "PointCloud",
    "Pose",
    "ProcessingMode",
    "Scenario",
    "Scene",
    "SceneConfig",
    "SensorSpec",
    "SimConfig",
    "TopologyPlan",
    "TradeoffCurve",
    "VoxelGridSpec",
    "bev_iou",
    "budget_to_cells",
    "check_feasible",
    "circle_nms",
    "evaluate",
    "evaluate_objective",
    "generate_scene",
    "match_and_score",
    "run_frame",
    "run_scenario",
    "sift",
    "simulate_lidar",
    "solve_exhaustive",
    "solve_greedy",
    "surrogate_detect",
    "sweep_budget",
    "transform_to_ego",
    "transform_to_grc",
    "voxelize",
]
