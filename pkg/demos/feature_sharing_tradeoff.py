"""AP against the mobile feature budget for each sifting strategy.

Infrastructure nodes keep 15,000 cells; vehicles are cut to the budget.
Prints AP, bandwidth saving and AP reduction per (budget, strategy).

    python3 demos/feature_sharing_tradeoff.py [--scenes 10]
"""

import argparse

from cpsim.config import build, default_document
from cpsim.dfs import FilterStrategy
from cpsim.sweep import DEFAULT_BUDGETS, sweep_budget


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenes", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    sc = build(default_document(frames=args.scenes, seed=args.seed)).scenario
    curve = sweep_budget(sc, list(FilterStrategy), DEFAULT_BUDGETS)

    names = [s.value for s in FilterStrategy]
    print(f"{'cells':>6} {'MB':>6} {'saving':>7}  " + "  ".join(f"{n:>16}" for n in names))
    for b in DEFAULT_BUDGETS:
        row = [r for r in curve.rows if r.budget_cells == b]
        aps = "  ".join(f"{r.overall_ap:>7.2f} (-{100 * r.ap_reduction:4.1f}%)" for r in row)
        print(f"{b:>6} {row[0].budget_bytes / 1e6:>6.2f} {row[0].bandwidth_saving:>7.1%}  {aps}")
    print("retained AP fraction:", {s.value: round(v, 3) for s, v in curve.resistance().items()})


if __name__ == "__main__":
    main()
