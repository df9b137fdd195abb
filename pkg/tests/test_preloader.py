from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stitchsim import preloader as pl
from stitchsim import zoo as zm
from stitchsim.zoo import StitchMap
from tests.conftest import fill_latency, make_dense_zoo, make_table


def test_hotness_everywhere_equals_config_count():
    # every map in every set has donor 1 at position 1
    sets = {
        (1, cfg): [StitchMap(1, (1, 1)), StitchMap(1, (1, 2))] for cfg in range(3)
    }
    table = pl.compute_hotness(sets)
    assert table.config_count == 3
    assert table.score((1, 1, 1)) == pytest.approx(3.0)


def test_hotness_absent_is_zero():
    sets = {(1, 0): [StitchMap(1, (1, 1))]}
    table = pl.compute_hotness(sets)
    assert table.score((1, 2, 1)) == 0.0
    assert table.score((9, 9, 9)) == 0.0


def test_hotness_partial_occurrence():
    # config 0: {m1, m2}, subgraph (1,1,1) only in m1 -> 1/2
    # config 1: {m1}                              -> 1/1; total 1.5
    m1, m2 = StitchMap(1, (1, 1)), StitchMap(1, (2, 2))
    table = pl.compute_hotness({(1, 0): [m1, m2], (1, 1): [m1]})
    assert table.score((1, 1, 1)) == pytest.approx(1.5)


def test_hotness_empty_sets_contribute_zero():
    m1 = StitchMap(1, (1, 1))
    table = pl.compute_hotness({(1, 0): [], (1, 1): [m1]}, config_count=2)
    assert table.config_count == 2
    assert table.score((1, 1, 1)) == pytest.approx(1.0)


def test_hotness_bounds_random():
    rng = random.Random(0)
    for _ in range(20):
        v, s, cfgs = rng.randint(1, 3), rng.randint(1, 3), rng.randint(1, 4)
        task = zm.Task(1, "t", v, s)
        maps = zm.enumerate_stitched(task)
        sets = {
            (1, c): rng.sample(maps, rng.randint(0, len(maps))) for c in range(cfgs)
        }
        table = pl.compute_hotness(sets, cfgs)
        for key, score in table.scores.items():
            assert 0.0 <= score <= cfgs + 1e-12


def uniform_hotness(zoo, rng):
    scores = {}
    for task in zoo.tasks:
        for i in range(1, task.variant_count + 1):
            for j in range(1, task.subgraph_count + 1):
                scores[(task.task_id, i, j)] = rng.uniform(0, 5)
    return pl.HotnessTable(scores, 5)


def test_greedy_full_budget_admits_one_per_position():
    zoo = make_dense_zoo(2, 3, 3, mem=10)
    hot = uniform_hotness(zoo, random.Random(1))
    plan = pl.greedy_preload(hot, zoo, budget_bytes=10**9)
    for task in zoo.tasks:
        assert len(plan.per_task[task.task_id]) == 3
        positions = sorted(j for (_t, _i, j) in plan.per_task[task.task_id])
        assert positions == [1, 2, 3]


def test_greedy_zero_budget_empty():
    zoo = make_dense_zoo(2, 2, 2)
    hot = uniform_hotness(zoo, random.Random(2))
    plan = pl.greedy_preload(hot, zoo, 0)
    assert plan.total_mem_bytes == 0
    assert all(not s for s in plan.per_task.values())


def test_greedy_manual_trace():
    # one task, S=2, V=2, all memories 10; hotness favors v2@pos1 and v1@pos2;
    # budget 15 admits v2@pos1 (10) and then nothing at pos2 (would reach 20)
    zoo = make_dense_zoo(1, 2, 2, mem=10)
    hot = pl.HotnessTable(
        {(1, 2, 1): 5.0, (1, 1, 1): 1.0, (1, 1, 2): 5.0, (1, 2, 2): 1.0}, 5
    )
    plan = pl.greedy_preload(hot, zoo, 15)
    assert plan.per_task[1] == frozenset({(1, 2, 1)})
    assert plan.total_mem_bytes == 10


def test_greedy_hotness_tie_prefers_lower_variant():
    zoo = make_dense_zoo(1, 3, 1, mem=10)
    hot = pl.HotnessTable({(1, i, 1): 2.0 for i in (1, 2, 3)}, 1)
    plan = pl.greedy_preload(hot, zoo, 100)
    assert plan.per_task[1] == frozenset({(1, 1, 1)})


@given(
    budget=st.integers(0, 200),
    mems=st.lists(st.integers(0, 50), min_size=4, max_size=4),
    seed=st.integers(0, 10_000),
)
@settings(max_examples=200)
def test_greedy_budget_safety_fuzz(budget, mems, seed):
    tasks = [zm.Task(1, "t", 2, 2)]
    variants = []
    k = 0
    for i in (1, 2):
        subs = []
        for j in (1, 2):
            subs.append(zm.Subgraph(1, i, j, mems[k]))
            k += 1
        variants.append(zm.SparseVariant(1, i, "dense", 0.0, "FP32", tuple(subs)))
    zoo = zm.Zoo(tasks, variants)
    hot = uniform_hotness(zoo, random.Random(seed))
    plan = pl.greedy_preload(hot, zoo, budget)
    assert plan.total_mem_bytes <= budget
    resident = [k for keys in plan.per_task.values() for k in keys]
    assert len(resident) == len(set(resident))


def test_greedy_monotone_coverage_uniform_memories():
    # per-position-uniform memories: a larger budget only ever extends the plan
    rng = random.Random(3)
    for _ in range(25):
        zoo = make_dense_zoo(2, 3, 2, mem=rng.choice([5, 10, 20]))
        hot = uniform_hotness(zoo, rng)
        budgets = sorted(rng.sample(range(0, 200, 5), 3))
        plans = [pl.greedy_preload(hot, zoo, b) for b in budgets]
        for small, big in zip(plans, plans[1:]):
            for t in small.per_task:
                assert small.per_task[t] <= big.per_task[t]


def test_full_preload_plan_covers_everything():
    zoo = make_dense_zoo(2, 2, 2, mem=7)
    plan = pl.full_preload_plan(zoo)
    assert plan.total_mem_bytes == 2 * 2 * 2 * 7
    for task in zoo.tasks:
        for m in zm.enumerate_stitched(task):
            assert plan.covers(m)


def switch_world():
    zoo = make_dense_zoo(1, 2, 3)
    latency = fill_latency(zoo, 2.0)
    table = make_table(zoo, latency, {(1, 1): 90.0, (1, 2): 85.0})
    return zoo, table


def test_switch_cost_all_preloaded_zero():
    zoo, table = switch_world()
    plan = pl.full_preload_plan(zoo)
    assert pl.switch_cost(StitchMap(1, (1, 2, 1)), plan, table, (1, 2, 3)) == 0.0
    assert pl.switch_cost(StitchMap(1, (1, 1, 1)), None, table, (1, 2, 3)) == 0.0


def test_switch_cost_one_missing_default_multipliers():
    zoo, table = switch_world()
    # resident: all of variant 1; map needs v2 at position 2 (2 ms inference)
    resident = frozenset({(1, 1, 1), (1, 1, 2), (1, 1, 3)})
    plan = pl.PreloadPlan({1: resident}, 0, 0)
    cost = pl.switch_cost(StitchMap(1, (1, 2, 1)), plan, table, (1, 2, 3))
    assert cost == pytest.approx(2.0 * 26.7)  # (23.7 + 3.0) x 2 ms


def test_switch_cost_two_missing_custom_multipliers():
    zoo = make_dense_zoo(1, 2, 3)
    latency = fill_latency(zoo, 1.0)
    table = make_table(zoo, latency, {(1, 1): 90.0, (1, 2): 85.0})
    resident = frozenset({(1, 1, 1)})
    plan = pl.PreloadPlan({1: resident}, 0, 0)
    cost = pl.switch_cost(
        StitchMap(1, (1, 1, 1)), plan, table, (1, 2, 3),
        pl.SwitchMultipliers(compile_x=10.0, load_x=2.0),
    )
    assert cost == pytest.approx(24.0)  # two cold subgraphs x 12 x 1 ms


def test_preload_plan_json_roundtrip(tmp_path):
    zoo = make_dense_zoo(2, 2, 2, mem=5)
    hot = uniform_hotness(zoo, random.Random(4))
    plan = pl.greedy_preload(hot, zoo, 25)
    path = tmp_path / "preload.json"
    pl.save_plan(plan, path)
    loaded = pl.load_plan(path)
    assert loaded == plan
