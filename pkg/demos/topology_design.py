"""Pick processing modes and active links under compute and bandwidth limits.

Solves the constrained four-node example with the greedy heuristic and,
unless ``--greedy-only`` is given, checks it against full enumeration
(about a minute on one core).

    python3 demos/topology_design.py [--greedy-only]
"""

import argparse
import os

from cpsim.config import load
from cpsim.solvers import PlanEvaluator, SolverStats, solve_exhaustive, solve_greedy

HERE = os.path.dirname(os.path.abspath(__file__))
MODE_NAMES = {0: "raw", 1: "features", 2: "boxes"}


def describe(name, plan, outcome, stats):
    modes = ", ".join(f"{n}:{MODE_NAMES[int(m)]}" for n, m in plan.modes.items())
    flows = ", ".join(f"{a}->{b}" for a, b in sorted(plan.flows)) or "none"
    print(f"{name:<10} J={outcome.objective:6.2f}  modes [{modes}]  flows [{flows}]  ({stats.plans_evaluated} plans, {stats.wall_time:.1f}s)")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--greedy-only", action="store_true")
    args = ap.parse_args()

    sc = load(os.path.join(HERE, "configs", "constrained_topology.yaml")).scenario
    scenes = [sc.scene_for(f) for f in sc.frames]
    ev = PlanEvaluator(sc.graph, scenes, sc.seed, sc.config)
    for link in sc.graph.links:
        print(f"link {link.src}->{link.dst}: {link.bandwidth_bytes_per_frame / 1e6:.1f} MB/frame")

    stats = SolverStats()
    plan = solve_greedy(sc.graph, scenes, sc.seed, sc.config, stats, ev)
    describe("greedy", plan, ev.outcome(plan), stats)
    if not args.greedy_only:
        stats = SolverStats()
        plan = solve_exhaustive(sc.graph, scenes, sc.seed, sc.config, stats, PlanEvaluator(sc.graph, scenes, sc.seed, sc.config))
        describe("exhaustive", plan, ev.outcome(plan), stats)


if __name__ == "__main__":
    main()
