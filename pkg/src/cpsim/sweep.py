"""Bandwidth sweep: AP as the mobile feature budget shrinks, per sifting strategy."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .dfs import FilterStrategy
from .evaluation import MP_BUCKETS
from .feature import CELL_PAYLOAD_BYTES
from .scene import ObjectClass
from .simulator import _plans_per_group, run_frame, sense

DEFAULT_BUDGETS = (8000, 6000, 4000, 2000, 1500, 1000, 500)
K_MAX = 15_000


def bandwidth_saving(budget_cells, k_max=K_MAX):
    if k_max <= 0:
        raise ValueError("k_max must be positive")
    return float(min(max(1.0 - budget_cells / k_max, 0.0), 1.0))


def ap_reduction(ap, ap_ref):
    """Relative AP drop against the reference, clipped to [0, 1]."""
    if ap_ref <= 0:
        return 0.0
    return float(min(max(1.0 - ap / ap_ref, 0.0), 1.0))


@dataclass(frozen=True)
class TradeoffRow:
    strategy: FilterStrategy
    budget_cells: int
    overall_ap: float
    bandwidth_saving: float
    ap_reduction: float

    @property
    def budget_bytes(self):
        return self.budget_cells * CELL_PAYLOAD_BYTES


@dataclass(frozen=True)
class TradeoffCurve:
    rows: tuple
    reference_ap: dict  # strategy -> AP at K_max
    k_max: int = K_MAX

    def ap(self, strategy, budget):
        strategy = FilterStrategy.parse(strategy)
        for r in self.rows:
            if r.strategy is strategy and r.budget_cells == budget:
                return r.overall_ap
        raise KeyError((strategy, budget))

    def resistance(self):
        """Mean retained AP fraction (1 - reduction) over the budgets, per strategy."""
        out = {}
        for r in self.rows:
            out.setdefault(r.strategy, []).append(1.0 - r.ap_reduction)
        return {s: float(np.mean(v)) for s, v in out.items()}

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["strategy", "budget_cells", "budget_bytes", "overall_ap", "bandwidth_saving", "ap_reduction"])
            for r in self.rows:
                w.writerow(
                    [r.strategy.value, r.budget_cells, r.budget_bytes, repr(r.overall_ap), repr(r.bandwidth_saving), repr(r.ap_reduction)]
                )


def read_tradeoff_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            {
                "strategy": r["strategy"],
                "budget_cells": int(r["budget_cells"]),
                "budget_bytes": int(r["budget_bytes"]),
                "overall_ap": float(r["overall_ap"]),
                "bandwidth_saving": float(r["bandwidth_saving"]),
                "ap_reduction": float(r["ap_reduction"]),
            }
            for r in csv.DictReader(fh)
        ]


def sweep_budget(scenario, strategies, budgets, seed=None, k_max=K_MAX, k_infrastructure=15_000, threads=1):
    """Mean per-frame Overall AP for each (strategy, mobile budget).

    Infrastructure nodes keep ``k_infrastructure`` cells; mobile nodes get
    the budget. Each strategy's reduction is measured against its own run at
    ``k_max``. Frames are sensed once and shared by every sweep point.
    """
    budgets = [int(b) for b in budgets]
    if not budgets:
        raise ValueError("budget list must not be empty")
    if any(b < 0 for b in budgets):
        raise ValueError("budgets must be non-negative")
    strategies = [FilterStrategy.parse(s) for s in strategies]
    if not strategies:
        raise ValueError("strategy list must not be empty")
    if seed is not None:
        scenario = replace(scenario, seed=seed)
    graph = scenario.graph
    plans = _plans_per_group(scenario)
    frames = scenario.frames
    scenes = [scenario.scene_for(f) for f in frames]
    sensed = [sense(graph, sc, scenario.seed) for sc in scenes]

    points = [(s, b) for s in strategies for b in sorted(set(budgets) | {k_max}, reverse=True)]

    def run_point(point):
        strategy, budget = point
        cfg = replace(scenario.config, strategy=strategy, k_mobile=budget, k_infrastructure=k_infrastructure)
        aps = []
        for f, sc, sf in zip(frames, scenes, sensed):
            active = graph.active_at(f)
            res = run_frame(graph, plans[active], sc, cfg, scenario.seed, active, sf)
            aps.append(res.overall_ap(cfg.thresholds))
        return float(np.mean(aps)) if aps else 0.0

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(run_point, points))
    else:
        values = [run_point(p) for p in points]
    table = dict(zip(points, values))

    reference = {s: table[(s, k_max)] for s in strategies}
    rows = [
        TradeoffRow(s, b, table[(s, b)], bandwidth_saving(b, k_max), ap_reduction(table[(s, b)], reference[s]))
        for s in strategies
        for b in sorted(set(budgets), reverse=True)
    ]
    rows.sort(key=lambda r: (-r.budget_cells, strategies.index(r.strategy)))
    return TradeoffCurve(tuple(rows), reference, k_max)


def write_node_combinations(path, scenario_result):
    """One row per engaged-node combination: overall AP and per-class AP by MP bucket."""
    classes = list(ObjectClass)
    header = ["combination", "nodes", "frames", "overall_ap", "mean_frame_ap"]
    header += [f"{c.value}_AP_MP>={b}" for c in classes for b in MP_BUCKETS]
    groups = sorted(scenario_result.groups, key=lambda g: (len(g.key), g.key))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for g in groups:
            row = [g.label, " ".join(map(str, g.key)), len(g.frames), repr(g.report.overall_ap), repr(g.mean_frame_ap)]
            row += [repr(g.report.per_class[c][b]) for c in classes for b in MP_BUCKETS]
            w.writerow(row)
