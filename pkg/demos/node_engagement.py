"""Overall AP as infrastructure and vehicle nodes join the scene.

Every Infra@i / Vehi@v combination sees the same pool of scene layouts, so
differences between rows come from the engaged sensors alone.

    python3 demos/node_engagement.py [--scenes 10]
"""

import argparse
from dataclasses import replace

from cpsim.config import build, default_document, node_addition_phases
from cpsim.evaluation import evaluate
from cpsim.fusion import DetectorParams
from cpsim.scene import ObjectClass
from cpsim.simulator import run_frame, sense


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenes", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    sc = build(default_document(frames=args.scenes, seed=args.seed)).scenario
    sim = replace(sc.config, detector=DetectorParams(clutter_rate=0.0))
    phases = node_addition_phases(1)
    frames = {p["label"]: [] for p in phases}
    for k in range(args.scenes):
        scene = sc.scene_for(k)
        sensed = sense(sc.graph, scene, sc.seed)  # shared by every combination
        for p in phases:
            active = frozenset(p["nodes"])
            res = run_frame(sc.graph, sc.plan.restricted_to(active), scene, sim, sc.seed, active, sensed)
            frames[p["label"]].append(res.eval_frame())

    header = f"{'combination':<18}{'overall':>9}" + "".join(f"{c.value[:3] + ' MP>=' + str(b):>12}" for c in ObjectClass for b in (10, 5, 1))
    print(header)
    for label, evs in frames.items():
        rep = evaluate(evs)
        cells = "".join(f"{rep.per_class[c][b]:>12.2f}" for c in ObjectClass for b in (10, 5, 1))
        print(f"{label:<18}{rep.overall_ap:>9.2f}{cells}")


if __name__ == "__main__":
    main()
