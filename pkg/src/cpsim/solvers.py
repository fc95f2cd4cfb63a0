"""Objective evaluation and plan search for the topology design problem.

The objective of a plan is the mean per-frame Overall AP obtained by running
the simulator under it. Sensing does not depend on the plan, so every frame
is sensed once and shared by all candidate evaluations.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

from .simulator import SimConfig, execute_frame, sense
from .topology import InfeasiblePlanError, MecGraph, NoFeasiblePlanError, TopologyPlan

SEARCH_CAP = 1_000_000


@dataclass
class SolverStats:
    plans_evaluated: int = 0
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PlanOutcome:
    plan: TopologyPlan
    objective: float
    violations: tuple
    utilization: dict  # ("node", id) | ("link", key) -> max fraction over frames

    @property
    def feasible(self):
        return not self.violations


def subgraph(graph, keep):
    keep = set(keep)
    return MecGraph(
        tuple(n for n in graph.nodes if n.id in keep),
        tuple(l for l in graph.links if l.src in keep and l.dst in keep),
    )


def _util(used, cap):
    if used <= 0:
        return 0.0
    if cap == 0:
        return math.inf
    return used / cap


class PlanEvaluator:
    """Runs plans over a fixed set of frames, caching sensing and outcomes."""

    def __init__(self, graph, scenes, seed, config=SimConfig()):
        self.graph = graph
        self.scenes = list(scenes)
        self.seed = seed
        self.config = config
        self.active = frozenset(graph.node_ids)
        self.sensed = [sense(graph, sc, seed) for sc in self.scenes]
        self._cache = {}
        self.evaluations = 0

    def outcome(self, plan):
        key = plan.encoding()
        if key in self._cache:
            return self._cache[key]
        self.evaluations += 1
        aps, violations, util = [], [], {}
        for sc, sensed in zip(self.scenes, self.sensed):
            result, viol = execute_frame(self.graph, plan, sc, self.config, self.seed, self.active, sensed)
            violations.extend(viol)
            aps.append(result.overall_ap(self.config.thresholds))
            ctx = result.context
            for nid, mb in ctx.node_input_mb.items():
                used = self.config.cost.rate(plan.modes[nid]) * mb
                k = ("node", nid)
                util[k] = max(util.get(k, 0.0), _util(used, self.graph.node(nid).compute_capacity))
            for fkey in plan.flows:
                k = ("link", fkey)
                used = ctx.flow_bytes.get(fkey, 0)
                util[k] = max(util.get(k, 0.0), _util(used, self.graph.link(*fkey).bandwidth_bytes_per_frame))
        j = sum(aps) / len(aps) if aps else 0.0
        out = PlanOutcome(plan, j, tuple(violations), util)
        self._cache[key] = out
        return out


def evaluate_objective(plan, graph, scenes, seed, config=SimConfig()):
    """Mean per-frame Overall AP of ``plan``; raises if any frame is infeasible."""
    plan.validate(graph)
    out = PlanEvaluator(graph, scenes, seed, config).outcome(plan)
    if out.violations:
        raise InfeasiblePlanError(out.violations)
    return out.objective


def _has_cycle(nodes, flows):
    succ = {n: [] for n in nodes}
    for a, b in flows:
        succ[a].append(b)
    state = {}

    def visit(n):
        state[n] = 1
        for m in succ[n]:
            s = state.get(m, 0)
            if s == 1 or (s == 0 and visit(m)):
                return True
        state[n] = 2
        return False

    return any(state.get(n, 0) == 0 and visit(n) for n in nodes)


def search_space_size(graph):
    size = 2 ** len(graph.links)
    for n in graph.nodes:
        size *= len(n.allowed_modes)
    return size


def _better(a, b):
    """True when outcome ``a`` beats ``b``: higher J, then fewer flows, then smaller encoding."""
    if b is None:
        return True
    if a.objective != b.objective:
        return a.objective > b.objective
    if len(a.plan.flows) != len(b.plan.flows):
        return len(a.plan.flows) < len(b.plan.flows)
    return a.plan.encoding() < b.plan.encoding()


def solve_exhaustive(graph, scenes, seed, config=SimConfig(), stats=None, evaluator=None):
    """Enumerate every mode assignment and flow subset; return the best feasible plan."""
    size = search_space_size(graph)
    if size > SEARCH_CAP:
        raise ValueError(f"search space too large: {size} plans exceeds {SEARCH_CAP}")
    t0 = time.perf_counter()
    ev = evaluator or PlanEvaluator(graph, scenes, seed, config)
    ids = graph.node_ids
    mode_choices = [sorted(graph.node(n).allowed_modes) for n in ids]
    links = [l.key for l in graph.links]
    best = None
    for r in range(len(links) + 1):
        for flows in itertools.combinations(links, r):
            if _has_cycle(ids, flows):
                continue
            for modes in itertools.product(*mode_choices):
                out = ev.outcome(TopologyPlan(dict(zip(ids, modes)), frozenset(flows)))
                if out.feasible and _better(out, best):
                    best = out
    if stats is not None:
        stats.plans_evaluated = ev.evaluations
        stats.wall_time = time.perf_counter() - t0
        stats.extra["search_space"] = size
    if best is None:
        raise NoFeasiblePlanError("no feasible plan")
    return best.plan


def _moves(graph, plan):
    """Single-step changes: set one node to another mode, or toggle one link.

    Switching a link on may also pick the sender's mode, since the payload
    form decides whether the flow fits at all.
    """
    for node in graph.nodes:
        for m in sorted(node.allowed_modes):
            if m != plan.modes[node.id]:
                yield TopologyPlan({**plan.modes, node.id: m}, plan.flows)
    for link in graph.links:
        if link.key in plan.flows:
            yield TopologyPlan(plan.modes, plan.flows - {link.key})
            continue
        flows = plan.flows | {link.key}
        if _has_cycle(graph.node_ids, flows):
            continue
        sender = graph.node(link.src)
        for m in sorted(sender.allowed_modes):
            yield TopologyPlan({**plan.modes, sender.id: m}, flows)


def _pair_moves(graph, plan):
    seen = set()
    for first in _moves(graph, plan):
        for second in _moves(graph, first):
            key = second.encoding()
            if key not in seen:
                seen.add(key)
                yield second


def _climb(graph, ev, start, by_ratio):
    """Take the best strictly improving single move; on a plateau try two-move compounds."""
    current, steps = start, 0
    while True:
        best = _best_move(ev, current, _moves(graph, current.plan), by_ratio)
        if best is None:
            best = _best_move(ev, current, _pair_moves(graph, current.plan), by_ratio)
        if best is None:
            return current, steps
        current = best
        steps += 1


def _best_move(ev, current, candidates, by_ratio):
    best, best_score = None, -math.inf
    for cand in candidates:
        if cand.encoding() == current.plan.encoding():
            continue
        out = ev.outcome(cand)
        if not out.feasible:
            continue
        gain = out.objective - current.objective
        if gain <= 1e-12:
            continue
        if by_ratio:
            spent = max([out.utilization[k] - current.utilization.get(k, 0.0) for k in out.utilization] + [0.0])
            score = gain / max(spent, 1e-9)
        else:
            score = gain
        if score > best_score or (score == best_score and _better(out, best)):
            best, best_score = out, score
    return best


def solve_greedy(graph, scenes, seed, config=SimConfig(), stats=None, evaluator=None):
    """Hill-climb from the no-flow plan; every accepted move strictly raises J.

    Two climbs run from the same start. One ranks moves by objective gain per
    unit of the scarcest resource they consume (the largest utilisation
    increase over all nodes and links); the other ranks by raw gain. The
    better end point is returned, which protects against the ratio rule
    locking in a cheap but weak move early.
    """
    t0 = time.perf_counter()
    ev = evaluator or PlanEvaluator(graph, scenes, seed, config)
    start = ev.outcome(TopologyPlan.no_flow(graph))
    if not start.feasible:
        raise NoFeasiblePlanError(f"no feasible plan: even the no-flow plan violates {start.violations[0]}")
    by_ratio, steps_r = _climb(graph, ev, start, True)
    by_gain, steps_g = _climb(graph, ev, start, False)
    best = by_ratio if _better(by_ratio, by_gain) else by_gain
    if stats is not None:
        stats.plans_evaluated = ev.evaluations
        stats.wall_time = time.perf_counter() - t0
        stats.extra["steps"] = steps_r + steps_g
    return best.plan
