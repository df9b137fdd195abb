"""Hotness-driven subgraph preloading under a global memory budget.

A subgraph's hotness sums, over all SLO configurations, its share of the
task's satisfying variant set: each stitched variant in the set contributes
1/|set| to every subgraph it uses.  Frequent subgraphs score high, and so
does a subgraph that is the only way to satisfy some configuration.

Preloading walks tasks and positions in order; at each position it sorts the
task's candidate subgraphs by hotness and admits the first one that still
fits the remaining budget, then moves on (one admission per position per
sweep).  Compile+load cost is charged for any subgraph a running variant
needs that was not preloaded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .ioutil import atomic_write_text
from .profiles import ProfileTable, lookup_latency
from .zoo import StitchMap, Zoo

SubgraphKey = tuple[int, int, int]  # (task_id, variant_index, position)


@dataclass(frozen=True)
class HotnessTable:
    scores: Mapping[SubgraphKey, float]
    config_count: int

    def score(self, key: SubgraphKey) -> float:
        return self.scores.get(key, 0.0)


@dataclass(frozen=True)
class PreloadPlan:
    per_task: Mapping[int, frozenset[SubgraphKey]]
    total_mem_bytes: int
    budget_bytes: int

    def covers(self, stitch: StitchMap) -> bool:
        resident = self.per_task.get(stitch.task_id, frozenset())
        return all(
            (stitch.task_id, donor, j) in resident
            for j, donor in enumerate(stitch.donors, start=1)
        )


def compute_hotness(
    satisfying_sets: Mapping[tuple[int, int], Sequence[StitchMap]],
    config_count: int | None = None,
) -> HotnessTable:
    """Score subgraphs from the per-(task, config) satisfying variant sets.

    Keys are (task_id, config_id); empty sets contribute nothing.  When
    config_count is not given it is derived from the distinct config ids.
    """
    if config_count is None:
        config_count = len({cfg for _, cfg in satisfying_sets})
    scores: dict[SubgraphKey, float] = {}
    for (task_id, _cfg), maps in sorted(satisfying_sets.items()):
        if not maps:
            continue
        share = 1.0 / len(maps)
        for stitch in maps:
            for j, donor in enumerate(stitch.donors, start=1):
                key = (task_id, donor, j)
                scores[key] = scores.get(key, 0.0) + share
    return HotnessTable(scores, config_count)


def greedy_preload(hotness: HotnessTable, zoo: Zoo, budget_bytes: int) -> PreloadPlan:
    """Admit at most one subgraph per (task, position), hottest first, while
    the shared budget allows."""
    if budget_bytes < 0:
        raise ValueError("budget_bytes must be nonnegative")
    per_task: dict[int, set[SubgraphKey]] = {t.task_id: set() for t in zoo.tasks}
    used = 0
    for task in zoo.tasks:
        for position in range(1, task.subgraph_count + 1):
            candidates = sorted(
                range(1, task.variant_count + 1),
                key=lambda i: (-hotness.score((task.task_id, i, position)), i),
            )
            for variant_index in candidates:
                key = (task.task_id, variant_index, position)
                if key in per_task[task.task_id]:
                    continue
                mem = zoo.subgraph(task.task_id, variant_index, position).mem_bytes
                if used + mem <= budget_bytes:
                    per_task[task.task_id].add(key)
                    used += mem
                    break
    return PreloadPlan(
        {t: frozenset(s) for t, s in per_task.items()}, used, budget_bytes
    )


def full_preload_plan(zoo: Zoo) -> PreloadPlan:
    """Everything resident: the no-budget reference point."""
    per_task: dict[int, frozenset[SubgraphKey]] = {}
    total = 0
    for task in zoo.tasks:
        keys = set()
        for variant in zoo.variants_of(task.task_id):
            for sub in variant.subgraphs:
                keys.add(sub.key())
                total += sub.mem_bytes
        per_task[task.task_id] = frozenset(keys)
    return PreloadPlan(per_task, total, total)


@dataclass(frozen=True)
class SwitchMultipliers:
    """Compile and load cost as multiples of a subgraph's inference latency.

    Set either factor to zero to study compile-only or load-only charging.
    """

    compile_x: float = 23.7
    load_x: float = 3.0


def switch_cost(
    stitch: StitchMap,
    plan: PreloadPlan | None,
    table: ProfileTable,
    placement: tuple[int, ...],
    multipliers: SwitchMultipliers = SwitchMultipliers(),
) -> float:
    """One-time cost of bringing up a variant: compile+load every subgraph
    not already resident, proportional to its inference latency on the
    processor the placement assigns it.  plan=None means everything resident."""
    if plan is None:
        return 0.0
    resident = plan.per_task.get(stitch.task_id, frozenset())
    factor = multipliers.compile_x + multipliers.load_x
    cost = 0.0
    for j, donor in enumerate(stitch.donors, start=1):
        if (stitch.task_id, donor, j) in resident:
            continue
        cost += factor * lookup_latency(table, stitch.task_id, donor, j, placement[j - 1])
    return cost


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def plan_to_dict(plan: PreloadPlan) -> dict:
    return {
        "budget_bytes": plan.budget_bytes,
        "total_mem_bytes": plan.total_mem_bytes,
        "per_task": [
            {
                "task_id": t,
                "subgraphs": sorted([i, j] for (_t, i, j) in keys),
            }
            for t, keys in sorted(plan.per_task.items())
        ],
    }


def plan_from_dict(doc: dict) -> PreloadPlan:
    return PreloadPlan(
        {
            int(r["task_id"]): frozenset(
                (int(r["task_id"]), int(i), int(j)) for i, j in r["subgraphs"]
            )
            for r in doc["per_task"]
        },
        int(doc["total_mem_bytes"]),
        int(doc["budget_bytes"]),
    )


def save_plan(plan: PreloadPlan, path: str | Path) -> None:
    atomic_write_text(path, json.dumps(plan_to_dict(plan), indent=2, sort_keys=True))


def load_plan(path: str | Path) -> PreloadPlan:
    return plan_from_dict(json.loads(Path(path).read_text()))
