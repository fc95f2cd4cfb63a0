"""``cpsim`` command line.

Exit codes: 0 success, 1 unexpected error, 2 invalid config or arguments,
3 infeasible plan, 4 no feasible plan exists. The last stdout line is a
one-line summary; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import yaml

from .config import ConfigError, dump_document, load
from .evaluation import EvalFrame, evaluate, frame_overall_ap, write_ap_report
from .fusion import read_detections, write_detections
from .scene import GroundTruthObject, ObjectClass, Pose
from .simulator import (
    message_complexity,
    read_message_log,
    run_frame,
    run_scenario,
    write_message_log,
    write_scenario_result,
)
from .solvers import PlanEvaluator, SolverStats, solve_exhaustive, solve_greedy
from .sweep import sweep_budget, write_node_combinations
from .topology import InfeasiblePlanError, NoFeasiblePlanError, TopologyPlan

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NO_PLAN = 4

SIMULATE_ARTIFACTS = (
    "ap_report.json",
    "messages.csv",
    "detections.jsonl",
    "ground_truth.jsonl",
    "scenario_result.json",
    "node_combinations.csv",
    "plan.yaml",
)


def _err(msg):
    print(f"cpsim: {msg}", file=sys.stderr)


def _load(args):
    return load(args.config, seed=args.seed, output_dir=args.output_dir, threads=args.threads)


def _outdir(cfg):
    os.makedirs(cfg.output_dir, exist_ok=True)
    return cfg.output_dir


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _gt_record(fr):
    return {
        "frame": fr.frame_index,
        "active": sorted(fr.active),
        "objects": [
            {
                "id": o.id,
                "class": o.cls.value,
                "center": [float(v) for v in o.center],
                "extent": [float(v) for v in o.extent],
                "yaw": o.yaw,
            }
            for o in fr.scene.objects
        ],
        "mp_counts": {str(k): int(v) for k, v in sorted(fr.mp_counts.items())},
    }


def _plan_document(plan, objective=None, violations=(), stats=None):
    doc = {"plan": plan.to_document()}
    if objective is not None:
        doc["objective"] = float(objective)
    doc["feasible"] = not violations
    doc["violations"] = [str(v) for v in violations]
    if stats is not None:
        doc["plans_evaluated"] = stats.plans_evaluated
    return doc


def cmd_simulate(args):
    cfg = _load(args)
    out = _outdir(cfg)
    t0 = time.perf_counter()
    result = run_scenario(cfg.scenario, threads=cfg.threads)
    frames = result.frames
    report = evaluate([fr.eval_frame() for fr in frames], cfg.scenario.config.thresholds)
    write_ap_report(
        os.path.join(out, "ap_report.json"),
        report,
        {"frames": len(frames), "mean_frame_ap": _mean([fr.overall_ap(cfg.scenario.config.thresholds) for fr in frames])},
    )
    write_message_log(os.path.join(out, "messages.csv"), frames)
    dets, tags = [], []
    for fr in frames:
        dets.extend(fr.final_detections)
        tags.extend([fr.frame_index] * len(fr.final_detections))
    write_detections(os.path.join(out, "detections.jsonl"), dets, tags)
    with open(os.path.join(out, "ground_truth.jsonl"), "w", encoding="utf-8") as fh:
        for fr in frames:
            fh.write(json.dumps(_gt_record(fr), sort_keys=True) + "\n")
    write_scenario_result(os.path.join(out, "scenario_result.json"), result)
    write_node_combinations(os.path.join(out, "node_combinations.csv"), result)
    plans = [{"nodes": sorted(active), **plan.to_document()} for active, plan in sorted(result.plans.items(), key=lambda kv: sorted(kv[0]))]
    dump_document({"solver": cfg.plan_solver, "plans": plans}, os.path.join(out, "plan.yaml"))
    _err(f"simulated {len(frames)} frames in {time.perf_counter() - t0:.2f}s")
    for g in sorted(result.groups, key=lambda g: (len(g.key), g.key)):
        _err(f"  {g.label:<20} nodes={list(g.key)} frames={len(g.frames)} overall AP={g.report.overall_ap:.2f}")
    print(
        f"simulate: {len(frames)} frames, overall AP {report.overall_ap:.2f}, "
        f"max {message_complexity([fr.message_log for fr in frames])} msgs/frame -> {out}"
    )
    return EXIT_OK


def _mean(values):
    return float(sum(values) / len(values)) if values else 0.0


def _csv_list(text, conv=str):
    return [conv(t) for t in text.split(",") if t.strip()]


def cmd_sweep(args):
    cfg = _load(args)
    out = _outdir(cfg)
    strategies = _csv_list(args.strategies) if args.strategies else list(cfg.strategies)
    budgets = _csv_list(args.budgets, int) if args.budgets is not None else list(cfg.budgets)
    k_infra = cfg.scenario.config.k_infrastructure
    t0 = time.perf_counter()
    try:
        curve = sweep_budget(cfg.scenario, strategies, budgets, k_max=cfg.k_max, k_infrastructure=k_infra, threads=cfg.threads)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    curve.write_csv(os.path.join(out, "tradeoff.csv"))
    resistance = curve.resistance()
    _write_json(
        os.path.join(out, "resistance.json"),
        {
            "k_max": curve.k_max,
            "reference_ap": {s.value: v for s, v in curve.reference_ap.items()},
            "resistance": {s.value: v for s, v in resistance.items()},
        },
    )
    _err(f"swept {len(curve.rows)} points in {time.perf_counter() - t0:.2f}s")
    for r in curve.rows:
        _err(f"  {r.strategy.value:<16} K={r.budget_cells:>6} AP={r.overall_ap:6.2f} saving={r.bandwidth_saving:.3f} reduction={r.ap_reduction:.3f}")
    best = max(resistance, key=lambda s: (resistance[s], s.value))
    print(f"sweep: {len(curve.rows)} points, most resistant {best.value} ({resistance[best]:.3f}) -> {out}")
    return EXIT_OK


def cmd_optimize(args):
    cfg = _load(args)
    out = _outdir(cfg)
    sc = cfg.scenario
    graph = sc.graph
    n = max(1, min(args.frames, len(sc.frames) or 1))
    scenes = [sc.scene_for(f) for f in range(n)]
    stats = SolverStats()
    ev = PlanEvaluator(graph, scenes, sc.seed, sc.config)
    solver = solve_exhaustive if args.solver == "exhaustive" else solve_greedy
    try:
        plan = solver(graph, scenes, sc.seed, sc.config, stats=stats, evaluator=ev)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    outcome = ev.outcome(plan)
    doc = _plan_document(plan, outcome.objective, outcome.violations, stats)
    doc["solver"] = args.solver
    doc["frames"] = n
    dump_document(doc, os.path.join(out, "plan.yaml"))
    _write_json(os.path.join(out, "solver_stats.json"), {"plans_evaluated": stats.plans_evaluated, "wall_time_s": stats.wall_time, **stats.extra})
    _err(f"{args.solver}: {stats.plans_evaluated} plans evaluated in {stats.wall_time:.2f}s")
    print(f"optimize: {args.solver} J={outcome.objective:.2f} flows={len(plan.flows)} feasible={outcome.feasible} -> {out}")
    return EXIT_OK


def _read_plan(path):
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if "plans" in doc:
        if len(doc["plans"]) != 1:
            raise ConfigError("plan file holds several per-group plans; pick one")
        doc = doc["plans"][0]
    return TopologyPlan.from_document(doc.get("plan", doc))


def cmd_check(args):
    """Re-run a stored plan over the config's frames and report violations."""
    cfg = _load(args)
    sc = cfg.scenario
    plan = _read_plan(args.plan)
    plan.validate(sc.graph)
    for f in sc.frames:
        active = sc.graph.active_at(f)
        run_frame(sc.graph, plan.restricted_to(active), sc.scene_for(f), sc.config, sc.seed, active)
    print(f"check: plan feasible on {len(sc.frames)} frames")
    return EXIT_OK


def _read_ground_truth(path):
    frames = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            objs = tuple(
                GroundTruthObject(o["id"], ObjectClass(o["class"]), Pose(*o["center"], yaw=o["yaw"]), tuple(o["extent"]))
                for o in rec["objects"]
            )
            frames.append((rec["frame"], tuple(rec["active"]), objs, {int(k): v for k, v in rec["mp_counts"].items()}))
    return frames


def replay(run_dir, thresholds=None):
    """Rebuild the AP report and message statistics from a run directory."""
    gts = _read_ground_truth(os.path.join(run_dir, "ground_truth.jsonl"))
    by_frame = {}
    for frame, det in read_detections(os.path.join(run_dir, "detections.jsonl")):
        by_frame.setdefault(frame, []).append(det)
    kwargs = {} if thresholds is None else {"thresholds": thresholds}
    evs = [EvalFrame(tuple(by_frame.get(f, ())), objs, mp) for f, _, objs, mp in gts]
    report = evaluate(evs, **kwargs)
    messages = read_message_log(os.path.join(run_dir, "messages.csv"))
    per_frame = {}
    for m in messages:
        per_frame.setdefault(m.frame, []).append(m)
    extra = {
        "frames": len(gts),
        "mean_frame_ap": _mean([frame_overall_ap(e, **kwargs) for e in evs]),
    }
    return report, extra, message_complexity(per_frame.values()), sum(m.bytes for m in messages)


def cmd_replay(args):
    run_dir = args.run_dir
    for name in ("ground_truth.jsonl", "detections.jsonl", "messages.csv"):
        if not os.path.exists(os.path.join(run_dir, name)):
            raise ConfigError(f"run directory lacks {name}")
    report, extra, max_msgs, total_bytes = replay(run_dir)
    target = args.output or os.path.join(run_dir, "replay_ap_report.json")
    write_ap_report(target, report, extra)
    original = os.path.join(run_dir, "ap_report.json")
    match = None
    if os.path.exists(original):
        with open(original, encoding="utf-8") as a, open(target, encoding="utf-8") as b:
            match = a.read() == b.read()
        if not match:
            _err("replayed report differs from ap_report.json")
    print(f"replay: overall AP {report.overall_ap:.2f}, max {max_msgs} msgs/frame, {total_bytes} bytes, matches={match}")
    return EXIT_OK if match is not False else EXIT_ERROR


def build_parser():
    p = argparse.ArgumentParser(prog="cpsim", description="Cooperative perception simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="scenario YAML")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (results do not depend on it)")
        sp.add_argument("--output-dir", default=None, help="override the output directory")

    sp = sub.add_parser("simulate", help="run the scenario and write reports")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="AP versus mobile feature budget per strategy")
    common(sp)
    sp.add_argument("--strategies", default=None, help="comma-separated strategy names")
    sp.add_argument("--budgets", default=None, help="comma-separated cell budgets")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("optimize", help="solve for a topology plan")
    common(sp)
    sp.add_argument("--solver", choices=("greedy", "exhaustive"), default="greedy")
    sp.add_argument("--frames", type=int, default=2, help="frames used to score plans")
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("check", help="verify a plan file against the config's frames")
    common(sp)
    sp.add_argument("plan", help="plan YAML written by optimize or simulate")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("replay", help="re-derive metrics from a simulate output directory")
    sp.add_argument("run_dir")
    sp.add_argument("--output", default=None, help="where to write the replayed report")
    sp.set_defaults(func=cmd_replay)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _err(str(exc))
        print("error: invalid configuration")
        return EXIT_CONFIG
    except InfeasiblePlanError as exc:
        _err(str(exc))
        print("error: infeasible plan")
        return EXIT_INFEASIBLE
    except NoFeasiblePlanError as exc:
        _err(str(exc))
        print("error: no feasible plan")
        return EXIT_NO_PLAN
    except (OSError, ValueError) as exc:
        _err(str(exc))
        print("error: " + type(exc).__name__)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
