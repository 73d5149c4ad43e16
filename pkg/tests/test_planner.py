import math

import pytest
from hypothesis import given, strategies as st

from cascadesim.catalog import Catalog, default_catalog, make_variant
from cascadesim.planner import (
    Plan,
    PlanCache,
    PlannerError,
    brute_force_solve,
    cached_solve,
    clipper_plan,
    diffserve_plan,
    make_planner,
    proteus_plan,
    queue_delay,
    solve,
    update_estimate,
    validate_plan,
)
from cascadesim.profiler import CascadeRow, CascadeTable, TableProvenance


def tiny_setup():
    """Two models, one batch size, one cascade row; everything hand-checkable."""
    light = make_variant("tiny-light", {1: 0.5}, 30.0, 5.0, (2.0, 4.0))
    heavy = make_variant("tiny-heavy", {1: 2.0}, 20.0, 2.0, (3.6, 4.0))
    cat = Catalog(variants=(light, heavy), batch_sizes=(1,), calibrated=True)
    row = CascadeRow(light_id="tiny-light", heavy_id="tiny-heavy",
                     theta=0.6, tau=0.3, r_light=0.75, r_heavy=0.25,
                     fidelity_cost=25.0, mean_latency_s=1.0)
    table = CascadeTable(rows=(row,), provenance=_prov(cat))
    return cat, table, row


def _prov(cat):
    return TableProvenance(catalog_hash=cat.content_hash(), prompts_hash="t",
                           n_prompts=1, seed=0, noise_sigma=0.0,
                           thresholds=(0.0, 1.0), eps_latency=0.1, eps_quality=0.1)


def test_queue_delay():
    assert queue_delay(0.0, 5.0) == 0.0
    assert queue_delay(-3.0, 5.0) == 0.0
    assert queue_delay(10.0, 5.0) == pytest.approx(3.0)
    assert queue_delay(10.0, 5.0, alpha=2.0) == pytest.approx(4.0)
    # rate floor keeps the estimate finite for idle models
    assert queue_delay(10.0, 0.0) == pytest.approx(1.5 * 10.0 / 0.01)


def test_update_estimate():
    assert update_estimate(10.0, 20.0) == pytest.approx(13.0)
    assert update_estimate(10.0, 20.0, weight=1.0) == 20.0
    assert update_estimate(10.0, 20.0, weight=0.0) == 10.0


@given(st.floats(0, 1000))
def test_update_estimate_fixed_point(x):
    assert update_estimate(x, x) == pytest.approx(x)


def test_solve_hand_example():
    cat, table, row = tiny_setup()
    plan = solve(table, cat, lam=4.0)
    # x = ceil(share * lam / mu): light ceil(3/2) = 2, heavy ceil(1/0.5) = 2
    assert plan.workers == {"tiny-light": 2, "tiny-heavy": 2}
    assert plan.batches == {"tiny-light": 1, "tiny-heavy": 1}
    assert plan.path_latency_s == pytest.approx(2.5)
    assert plan.fidelity_cost == 25.0
    assert not plan.infeasible
    assert validate_plan(plan, cat) == []
    brute = brute_force_solve(table, cat, lam=4.0)
    assert brute.workers == plan.workers
    assert brute.fidelity_cost == plan.fidelity_cost


def test_solve_zero_demand_keeps_one_worker_per_active_model():
    cat, table, _ = tiny_setup()
    plan = solve(table, cat, lam=0.0)
    assert plan.workers == {"tiny-light": 1, "tiny-heavy": 1}
    assert not plan.infeasible


def test_solve_rejects_negative_demand():
    cat, table, _ = tiny_setup()
    with pytest.raises(PlannerError):
        solve(table, cat, lam=-1.0)


def test_solve_worker_budget_forces_fallback():
    cat, table, _ = tiny_setup()
    plan = solve(table, cat, lam=4.0, workers=3)
    assert plan.infeasible
    # bottleneck capacity: {1,2} gives min(2/0.75, 1/0.25) = 2.67, {2,1} gives 2.0
    assert plan.workers == {"tiny-light": 1, "tiny-heavy": 2}
    assert plan.total_workers == 3


def test_solve_queue_term_gates_feasibility():
    cat, table, _ = tiny_setup()
    queues = {"tiny-heavy": 10.0}
    # heavy drain: 1.5 * 10 / (4 * 0.25) = 15, path = 0.5 + 2 + 15 = 17.5
    plan = solve(table, cat, lam=4.0, queues=queues, t_slo=20.0)
    assert not plan.infeasible
    assert plan.path_latency_s == pytest.approx(17.5)
    tight = solve(table, cat, lam=4.0, queues=queues, t_slo=10.0)
    assert tight.infeasible


def test_tie_break_prefers_fewer_workers():
    light = make_variant("m-a", {1: 0.5}, 30.0, 5.0, (2.0, 4.0))
    heavy = make_variant("m-b", {1: 2.0}, 20.0, 2.0, (3.6, 4.0))
    cat = Catalog(variants=(light, heavy), batch_sizes=(1,), calibrated=True)
    greedy = CascadeRow("m-a", "m-b", 0.2, 0.2, 0.5, 0.5, 25.0, 1.2)
    lean = CascadeRow("m-a", "m-b", 0.4, 0.1, 0.9, 0.1, 25.0, 0.9)
    table = CascadeTable(rows=(greedy, lean), provenance=_prov(cat))
    plan = solve(table, cat, lam=4.0)
    # same fidelity: greedy needs 1+4=5 workers, lean needs 2+1=3
    assert plan.row == lean
    assert plan.total_workers == 3


def test_tie_break_prefers_lower_path_latency():
    light = make_variant("m-a", {1: 0.5}, 30.0, 5.0, (2.0, 4.0))
    heavy = make_variant("m-b", {1: 2.0}, 30.0, 5.0, (3.6, 4.0))
    cat = Catalog(variants=(light, heavy), batch_sizes=(1,), calibrated=False)
    slow = CascadeRow("m-b", "m-b", 1.0, 0.0, 1.0, 0.0, 25.0, 2.0)
    fast = CascadeRow("m-a", "m-a", 1.0, 0.0, 1.0, 0.0, 25.0, 0.5)
    table = CascadeTable(rows=(slow, fast), provenance=_prov(cat))
    plan = solve(table, cat, lam=0.4)
    # both single-model rows cost one worker; the faster path wins
    assert plan.row == fast
    assert plan.path_latency_s == pytest.approx(0.5)


def test_tie_break_falls_back_to_row_index():
    cat, _, row = tiny_setup()
    twin = CascadeRow(row.light_id, row.heavy_id, 0.5, 0.2,
                      row.r_light, row.r_heavy, row.fidelity_cost,
                      row.mean_latency_s)
    table = CascadeTable(rows=(row, twin), provenance=_prov(cat))
    plan = solve(table, cat, lam=4.0)
    assert plan.row == row  # identical keys: first row in table order wins


def test_validate_plan_flags_corruption():
    cat, table, row = tiny_setup()
    good = solve(table, cat, lam=4.0)
    starved = Plan(row=row, workers={"tiny-light": 1, "tiny-heavy": 2},
                   batches=good.batches, lam=4.0, queues={},
                   fidelity_cost=good.fidelity_cost, path_latency_s=good.path_latency_s)
    problems = validate_plan(starved, cat)
    assert any(p.startswith("capacity: tiny-light") for p in problems)
    over = Plan(row=row, workers={"tiny-light": 20, "tiny-heavy": 2},
                batches=good.batches, lam=4.0, queues={},
                fidelity_cost=good.fidelity_cost, path_latency_s=good.path_latency_s)
    assert any(p.startswith("worker-budget") for p in validate_plan(over, cat))


def test_plan_describe_is_self_contained():
    cat, table, _ = tiny_setup()
    plan = solve(table, cat, lam=4.0, queues={"tiny-heavy": 3.0})
    desc = plan.describe()
    for key in ("label", "light", "heavy", "theta", "tau", "r_light", "r_heavy",
                "workers", "batches", "lam", "queues", "fidelity_cost",
                "path_latency_s", "infeasible"):
        assert key in desc
    assert desc["queues"] == {"tiny-heavy": 3.0}


def test_cache_d_ignores_queues():
    cat, table, _ = tiny_setup()
    cache = PlanCache(mode="d")
    p1, hit1 = cached_solve(cache, table, cat, lam=12.0, queues={})
    p2, hit2 = cached_solve(cache, table, cat, lam=14.0, queues={"tiny-heavy": 500.0})
    assert not hit1 and hit2
    assert p2 is p1  # stale plan reused despite the backlog
    assert cache.hits == 1 and cache.misses == 1


def test_cache_dq_refreshes_on_queue_growth():
    cat, table, _ = tiny_setup()
    cache = PlanCache(mode="dq")
    _, hit1 = cached_solve(cache, table, cat, lam=12.0, queues={})
    _, hit2 = cached_solve(cache, table, cat, lam=12.0, queues={"tiny-heavy": 3.0})
    _, hit3 = cached_solve(cache, table, cat, lam=12.0, queues={"tiny-heavy": 500.0})
    assert not hit1 and hit2 and not hit3


def test_cache_rejects_unknown_mode():
    with pytest.raises(PlannerError):
        PlanCache(mode="q")


def test_clipper_light_uses_whole_cluster(catalog):
    plan = clipper_plan(catalog, "light", lam=50.0)
    assert plan.label == "clipper-light"
    assert plan.row.light_id == plan.row.heavy_id == "sdxl-lightning"
    assert plan.workers == {"sdxl-lightning": 16}
    assert plan.batches == {"sdxl-lightning": 16}
    assert not plan.infeasible


def test_clipper_heavy_overloads_honestly(catalog):
    plan = clipper_plan(catalog, "heavy", lam=50.0)
    assert plan.row.light_id == "sd35-large"
    # largest batch fitting 60 s is 4 (b=8 takes 74.25 s); capacity ~1.35 qps
    assert plan.batches == {"sd35-large": 4}
    assert plan.infeasible
    with pytest.raises(PlannerError):
        clipper_plan(catalog, "medium", lam=1.0)


def test_proteus_picks_single_feasible_model(catalog):
    plan = proteus_plan(catalog, lam=50.0)
    assert plan.label == "proteus"
    assert plan.row.light_id == plan.row.heavy_id == "sdxl-lightning"
    assert plan.workers["sdxl-lightning"] == 8  # ceil(50 / 6.7368)
    assert not plan.infeasible


def test_diffserve_fixed_pair(small_table, catalog):
    plan = diffserve_plan(small_table, catalog, lam=5.0)
    assert plan.label == "diffserve"
    assert plan.row.light_id == "sd35-turbo"
    assert plan.row.heavy_id == "sd35-large"


def test_make_planner_modes(small_table, catalog):
    for mode in ("online", "cache-d", "cache-dq", "clipper-light",
                 "clipper-heavy", "proteus", "diffserve"):
        fn = make_planner(mode, small_table, catalog)
        plan, info = fn(10.0, {})
        assert isinstance(plan, Plan)
        assert plan.total_workers <= 16
        assert isinstance(info, dict)
    with pytest.raises(PlannerError):
        make_planner("magic", small_table, catalog)


def test_solve_agrees_with_brute_force_on_profiled_table(small_table, catalog):
    subset = CascadeTable(rows=small_table.rows[:150], provenance=small_table.provenance)
    for lam in (0.0, 3.0, 17.0, 42.0, 86.0):
        fast = solve(subset, catalog, lam=lam)
        slow = brute_force_solve(subset, catalog, lam=lam)
        assert fast.infeasible == slow.infeasible
        if not fast.infeasible:
            assert fast.fidelity_cost == pytest.approx(slow.fidelity_cost)
            assert fast.total_workers == slow.total_workers


def test_brute_force_refuses_large_instances(small_table, catalog):
    with pytest.raises(PlannerError):
        brute_force_solve(small_table, catalog, lam=1.0, workers=32)
