
import pytest

from conftest import keepouts_for, star_graph
from cpsim.dfs import FilterStrategy
from cpsim.fusion import DetectorParams
from cpsim.scene import SceneConfig
from cpsim.simulator import Scenario, SimConfig
from cpsim.sweep import (
    DEFAULT_BUDGETS,
    K_MAX,
    TradeoffRow,
    ap_reduction,
    bandwidth_saving,
    read_tradeoff_csv,
    sweep_budget,
)
from cpsim.topology import MecGraph, NodeKind, TopologyPlan


def test_saving_and_reduction_arithmetic():
    assert bandwidth_saving(K_MAX) == 0.0
    assert bandwidth_saving(1500) == pytest.approx(0.9, abs=1e-12)
    assert bandwidth_saving(30_000) == 0.0
    assert ap_reduction(80.0, 80.0) == 0.0
    assert ap_reduction(40.0, 80.0) == pytest.approx(0.5)
    assert ap_reduction(90.0, 80.0) == 0.0
    assert ap_reduction(10.0, 0.0) == 0.0
    with pytest.raises(ValueError):
        bandwidth_saving(10, 0)
    assert TradeoffRow(FilterStrategy.TOP_K_NEAREST, 8000, 1.0, 0.0, 0.0).budget_bytes == 2_048_000


def tiny_scenario(frames=2, seed=1):
    g = star_graph([NodeKind.CENTRAL_PERCEPTION_INFRA, NodeKind.CPV, NodeKind.CPV])
    g = MecGraph(g.nodes, g.links, {f: frozenset(g.node_ids) for f in range(frames)})
    plan = TopologyPlan({0: 2, 1: 1, 2: 1, 3: 1}, {(1, 0), (2, 0), (3, 0)})
    sc = SceneConfig(cars=4, pedestrians=3, bounds=(0, 0, 40, 30), keepouts=keepouts_for(g))
    cfg = SimConfig(detector=DetectorParams(clutter_rate=0.0))
    return Scenario(g, plan, sc, cfg, seed)


@pytest.fixture(scope="module")
def curve():
    return sweep_budget(tiny_scenario(), list(FilterStrategy), DEFAULT_BUDGETS, k_max=600, k_infrastructure=600)


def test_grid_shape_and_order(curve):
    assert len(curve.rows) == 4 * 7
    budgets = [r.budget_cells for r in curve.rows]
    assert budgets == sorted(budgets, reverse=True)
    assert [r.strategy for r in curve.rows[:4]] == list(FilterStrategy)
    for r in curve.rows:
        assert 0.0 <= r.ap_reduction <= 1.0 and r.bandwidth_saving == bandwidth_saving(r.budget_cells, 600)


def test_reference_is_budget_at_k_max(curve):
    # the tiny sensors occupy fewer than 600 cells, so the reference never truncates
    for s in FilterStrategy:
        assert curve.reference_ap[s] == curve.reference_ap[FilterStrategy.RANDOM_VOXEL]
    assert set(curve.resistance()) == set(FilterStrategy)
    assert all(0.0 <= v <= 1.0 for v in curve.resistance().values())


def test_single_budget_at_k_max_equalises_strategies():
    c = sweep_budget(tiny_scenario(), list(FilterStrategy), [600], k_max=600, k_infrastructure=600)
    aps = {r.overall_ap for r in c.rows}
    assert len(c.rows) == 4 and len(aps) == 1
    assert all(r.ap_reduction == 0.0 and r.bandwidth_saving == 0.0 for r in c.rows)


def test_topk_nearest_monotone_in_budget_without_clutter(curve):
    aps = [curve.ap("top_k_nearest", b) for b in sorted(DEFAULT_BUDGETS)]
    assert all(b >= a - 1e-9 for a, b in zip(aps, aps[1:]))


def test_invalid_inputs():
    with pytest.raises(ValueError):
        sweep_budget(tiny_scenario(), list(FilterStrategy), [])
    with pytest.raises(ValueError):
        sweep_budget(tiny_scenario(), [], [100])
    with pytest.raises(ValueError):
        sweep_budget(tiny_scenario(), ["topk_nearest"], [-1])


def test_threads_do_not_change_results(curve):
    again = sweep_budget(tiny_scenario(), list(FilterStrategy), DEFAULT_BUDGETS, k_max=600, k_infrastructure=600, threads=3)
    assert again == curve


def test_csv_round_trip(curve, tmp_path):
    path = tmp_path / "t.csv"
    curve.write_csv(path)
    rows = read_tradeoff_csv(path)
    assert len(rows) == len(curve.rows)
    for got, want in zip(rows, curve.rows):
        assert got["strategy"] == want.strategy.value and got["overall_ap"] == want.overall_ap
        assert got["budget_bytes"] == want.budget_cells * 256
