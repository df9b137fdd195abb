"""Joint placement-order and variant selection.

Three steps per SLO configuration: (1) per task, keep the stitched variants
whose predicted accuracy meets the floor and whose pipeline latency fits the
ceiling under at least one candidate processor order; (2) pick the single
global order minimizing the mean, over tasks with any feasible variant, of
each task's best latency under that order; (3) under the winning order, pick
each task's fastest feasible variant, re-checking the ceiling because step 1
only required feasibility under *some* order.

Ties are broken deterministically everywhere: orders by their processor-id
sequence, variants by their donor vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from itertools import permutations
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .estimator import AccuracyEstimator, MeanAccuracyBaseline, extract_features
from .ioutil import atomic_write_text
from .profiles import ProfileTable
from .zoo import StitchMap, Task, Zoo, enumerate_stitched


class InfeasiblePlanError(RuntimeError):
    """No task has any variant satisfying its SLO under any order."""


@dataclass(frozen=True)
class SloBound:
    acc_floor: float
    lat_ceiling_ms: float


@dataclass(frozen=True)
class SloConfig:
    """One accuracy-floor / latency-ceiling pair per task."""

    config_id: int
    per_task: Mapping[int, SloBound]

    def bound(self, task_id: int) -> SloBound:
        return self.per_task[task_id]


@dataclass(frozen=True)
class PlacementOrder:
    """Processor assigned to each subgraph position."""

    procs: tuple[int, ...]

    def is_injective(self) -> bool:
        return len(set(self.procs)) == len(self.procs)


def enumerate_orders(proc_ids: Sequence[int], subgraphs: int) -> list[PlacementOrder]:
    """All non-overlapping placement orders: injective assignments of
    processors to positions, lexicographic by processor-id sequence."""
    if subgraphs > len(proc_ids):
        raise ValueError(
            f"cannot place {subgraphs} positions on {len(proc_ids)} processors "
            "without overlap"
        )
    return [PlacementOrder(p) for p in permutations(sorted(proc_ids), subgraphs)]


class ChoiceStatus(Enum):
    CHOSEN = "chosen"
    NO_FEASIBLE_VARIANT = "no_feasible_variant"
    VIOLATES_UNDER_BEST_ORDER = "violates_under_best_order"


@dataclass(frozen=True)
class TaskChoice:
    status: ChoiceStatus
    stitch: StitchMap | None = None

    def dispatchable(self) -> bool:
        return self.status is ChoiceStatus.CHOSEN


@dataclass(frozen=True)
class PlanResult:
    config_id: int
    best_order: PlacementOrder
    per_task_choice: Mapping[int, TaskChoice]
    mean_latency_ms: float

    def planning_infeasible_count(self) -> int:
        return sum(
            1
            for c in self.per_task_choice.values()
            if c.status is ChoiceStatus.NO_FEASIBLE_VARIANT
        )


AccuracyFn = Callable[[StitchMap], float]


def truth_accuracy_fn(table: ProfileTable) -> AccuracyFn:
    return table.stitched_accuracy


def estimator_accuracy_fn(
    est: AccuracyEstimator | MeanAccuracyBaseline | Mapping[int, AccuracyEstimator],
    table: ProfileTable,
) -> AccuracyFn:
    """Accuracy source from one estimator, or one per task when given a map."""
    if isinstance(est, Mapping):
        return lambda stitch: est[stitch.task_id].predict(extract_features(stitch, table))
    return lambda stitch: est.predict(extract_features(stitch, table))


def filter_feasible(
    task: Task,
    candidate_maps: Sequence[StitchMap],
    accuracy_fn: AccuracyFn,
    table,
    slo: SloBound,
    orders: Sequence[PlacementOrder],
) -> list[StitchMap]:
    """Variants meeting the accuracy floor and fitting the latency ceiling
    under at least one order.  An empty result is a legal outcome."""
    if not orders:
        raise ValueError("orders must be nonempty")
    feasible = []
    for stitch in candidate_maps:
        if accuracy_fn(stitch) < slo.acc_floor:
            continue
        for order in orders:
            if table.stitched_latency(stitch, order.procs) <= slo.lat_ceiling_ms:
                feasible.append(stitch)
                break
    return feasible


def choose_order(
    per_task_feasible: Mapping[int, Sequence[StitchMap]],
    table,
    orders: Sequence[PlacementOrder],
) -> tuple[PlacementOrder, float]:
    """Order minimizing the mean best-case latency across feasible tasks.

    Tasks with no feasible variant are excluded from the mean; if every task
    is empty there is nothing to optimize and InfeasiblePlanError is raised.
    """
    active = {t: maps for t, maps in per_task_feasible.items() if maps}
    if not active:
        raise InfeasiblePlanError("every task has an empty feasible set")
    best: tuple[float, tuple[int, ...]] | None = None
    best_order = None
    for order in orders:
        total = 0.0
        for maps in active.values():
            total += min(table.stitched_latency(m, order.procs) for m in maps)
        mean = total / len(active)
        key = (mean, order.procs)
        if best is None or key < best:
            best = key
            best_order = order
    assert best is not None and best_order is not None
    return best_order, best[0]


def select_final_variants(
    per_task_feasible: Mapping[int, Sequence[StitchMap]],
    table,
    best_order: PlacementOrder,
    slo: SloConfig,
) -> dict[int, TaskChoice]:
    """Per task, the fastest feasible variant under the chosen order.

    Feasibility in filter_feasible is order-existential, so the winner is
    re-checked against the ceiling under best_order; a violating winner is
    marked rather than silently returned.
    """
    choices: dict[int, TaskChoice] = {}
    for task_id, maps in per_task_feasible.items():
        if not maps:
            choices[task_id] = TaskChoice(ChoiceStatus.NO_FEASIBLE_VARIANT)
            continue
        chosen = min(
            maps,
            key=lambda m: (table.stitched_latency(m, best_order.procs), m.donors),
        )
        lat = table.stitched_latency(chosen, best_order.procs)
        if lat > slo.bound(task_id).lat_ceiling_ms:
            choices[task_id] = TaskChoice(ChoiceStatus.VIOLATES_UNDER_BEST_ORDER, chosen)
        else:
            choices[task_id] = TaskChoice(ChoiceStatus.CHOSEN, chosen)
    return choices


def plan(
    tasks: Sequence[Task],
    zoo: Zoo,
    table: ProfileTable,
    accuracy_fn: AccuracyFn,
    slo: SloConfig,
    orders: Sequence[PlacementOrder] | None = None,
) -> PlanResult:
    """Full pipeline: filter per task, choose the order, pick final variants."""
    if orders is None:
        orders = enumerate_orders(table.proc_ids(), tasks[0].subgraph_count)
    per_task_feasible = {
        task.task_id: filter_feasible(
            task,
            enumerate_stitched(task),
            accuracy_fn,
            table,
            slo.bound(task.task_id),
            orders,
        )
        for task in tasks
    }
    best_order, mean_latency = choose_order(per_task_feasible, table, orders)
    choices = select_final_variants(per_task_feasible, table, best_order, slo)
    return PlanResult(slo.config_id, best_order, choices, mean_latency)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def plan_to_dict(result: PlanResult, table: ProfileTable | None = None) -> dict:
    def proc_label(pid: int) -> str | int:
        return table.proc_name(pid) if table is not None else pid

    return {
        "config_id": result.config_id,
        "best_order": [proc_label(p) for p in result.best_order.procs],
        "per_task": [
            {
                "task_id": t,
                "donors": list(c.stitch.donors)
                if c.status is ChoiceStatus.CHOSEN and c.stitch is not None
                else "infeasible",
            }
            for t, c in sorted(result.per_task_choice.items())
        ],
        "mean_latency_ms": result.mean_latency_ms,
    }


def save_plan(result: PlanResult, path: str | Path, table: ProfileTable | None = None) -> None:
    atomic_write_text(path, json.dumps(plan_to_dict(result, table), indent=2, sort_keys=True))


def plan_from_dict(doc: dict, table: ProfileTable) -> PlanResult | None:
    """Rebuild a plan from its JSON document; None when nothing was feasible.

    Tasks serialized as "infeasible" load as undispatchable markers (the file
    format does not distinguish empty feasible sets from winners that violate
    the ceiling under the chosen order; both count as violations downstream).
    """
    if doc.get("best_order") is None:
        return None
    by_name = {p.name: p.proc_id for p in table.processors}
    procs = tuple(
        by_name[p] if isinstance(p, str) else int(p) for p in doc["best_order"]
    )
    choices = {}
    for row in doc["per_task"]:
        task_id = int(row["task_id"])
        if row["donors"] == "infeasible":
            choices[task_id] = TaskChoice(ChoiceStatus.NO_FEASIBLE_VARIANT)
        else:
            stitch = StitchMap(task_id, tuple(int(d) for d in row["donors"]))
            choices[task_id] = TaskChoice(ChoiceStatus.CHOSEN, stitch)
    return PlanResult(
        int(doc["config_id"]),
        PlacementOrder(procs),
        choices,
        float(doc["mean_latency_ms"]),
    )


def load_plan(path: str | Path, table: ProfileTable) -> PlanResult | None:
    return plan_from_dict(json.loads(Path(path).read_text()), table)


def slo_config_to_dict(config: SloConfig) -> dict:
    return {
        "config_id": config.config_id,
        "per_task": [
            {"task_id": t, "acc_floor": b.acc_floor, "lat_ceiling_ms": b.lat_ceiling_ms}
            for t, b in sorted(config.per_task.items())
        ],
    }


def slo_config_from_dict(doc: dict) -> SloConfig:
    return SloConfig(
        int(doc["config_id"]),
        {
            int(r["task_id"]): SloBound(float(r["acc_floor"]), float(r["lat_ceiling_ms"]))
            for r in doc["per_task"]
        },
    )


def save_slo_configs(configs: Sequence[SloConfig], path: str | Path, meta: dict | None = None) -> None:
    doc = dict(meta or {})
    doc["configs"] = [slo_config_to_dict(c) for c in configs]
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True))


def load_slo_configs(path: str | Path) -> list[SloConfig]:
    doc = json.loads(Path(path).read_text())
    return [slo_config_from_dict(c) for c in doc["configs"]]
