"""Deterministic discrete-event simulation of pipelined multi-task inference.

Each processor serves a FIFO queue, non-preemptively, with service times read
from the profile table.  Tasks run closed-loop: one query in flight, the next
released the instant the previous completes.  Stage j of a query becomes
ready when stage j-1 finishes (plus the per-hop communication constant when
the processors differ) and then waits its turn on its assigned processor.
The arrival permutation fixes the queue order of the initial, simultaneous
releases, which is the only thing distinguishing one run from another given
the same selections.

Variant bring-up (compile + load of non-preloaded subgraphs) happens in a
reconfiguration phase before any query is served: every task's stream starts
once the slowest bring-up finishes.  The phase extends the makespan (and so
lowers throughput) but is not part of any query's measured latency, and it
leaves queue interleavings identical across memory budgets.
"""

from __future__ import annotations

import csv
import heapq
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from itertools import permutations as iter_permutations
from pathlib import Path
from typing import Mapping, Sequence

from . import optimizer
from .estimator import AccuracyEstimator, MeanAccuracyBaseline
from .ioutil import atomic_write_text
from .optimizer import (
    ChoiceStatus,
    PlacementOrder,
    PlanResult,
    SloBound,
    SloConfig,
    enumerate_orders,
)
from .preloader import PreloadPlan, SwitchMultipliers, switch_cost
from .profiles import ProfileTable, lookup_latency
from .zoo import StitchMap, Task, Zoo


class SimulationError(RuntimeError):
    """Inconsistent simulation inputs (unknown subgraphs, bad plans...)."""


class PolicyKind(Enum):
    SV_AO_P = "SV-AO-P"
    SV_AO_NP = "SV-AO-NP"
    SV_LO_P = "SV-LO-P"
    SV_LO_NP = "SV-LO-NP"
    AV_P = "AV-P"
    AV_NP = "AV-NP"
    STITCHED = "STITCHED"


@dataclass(frozen=True)
class Policy:
    kind: PolicyKind
    fixed_order: PlacementOrder | None = None
    use_estimator: bool = False  # STITCHED only: estimator instead of truth

    @property
    def name(self) -> str:
        return self.kind.value


@dataclass(frozen=True)
class WorkloadSpec:
    tasks: tuple[Task, ...]
    queries_per_task: int = 100
    arrival_permutations: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self) -> None:
        if self.queries_per_task < 1:
            raise SimulationError("queries_per_task must be >= 1")
        if not self.arrival_permutations:
            ids = sorted(t.task_id for t in self.tasks)
            object.__setattr__(
                self, "arrival_permutations", tuple(iter_permutations(ids))
            )


def all_permutations(tasks: Sequence[Task]) -> tuple[tuple[int, ...], ...]:
    return tuple(iter_permutations(sorted(t.task_id for t in tasks)))


@dataclass(frozen=True)
class SimRow:
    policy: str
    config_id: int
    permutation_index: int
    seed: int
    violation_rate: float
    throughput_qps: float
    mean_latency_ms: float
    infeasible_tasks: int


@dataclass
class SimReport:
    rows: list[SimRow] = field(default_factory=list)


# ---------------------------------------------------------------------------
# SLO configuration sweeps
# ---------------------------------------------------------------------------


def uniform_samples(lo: float, hi: float, n: int = 5) -> list[float]:
    """n evenly spaced points including both endpoints; a degenerate range
    repeats the single value."""
    if lo == hi:
        return [lo] * n
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def accuracy_grid(lo: float, hi: float) -> list[float]:
    """Five accuracy floors over the observed range widened by 2 points."""
    return uniform_samples(lo - 2.0, hi + 2.0, 5)


def latency_grid(lo: float, hi: float) -> list[float]:
    """Five latency ceilings over the observed range widened by 20%."""
    return uniform_samples(0.8 * lo, 1.2 * hi, 5)


def _variant_ranges(
    zoo: Zoo, table: ProfileTable, order: PlacementOrder
) -> dict[int, tuple[float, float, float, float]]:
    """Per task: (acc_min, acc_max, lat_min, lat_max) over original variants."""
    out = {}
    for task in zoo.tasks:
        accs = []
        lats = []
        for variant in zoo.variants_of(task.task_id):
            accs.append(table.accuracy_of(task.task_id, variant.variant_index))
            constant = StitchMap(
                task.task_id, (variant.variant_index,) * task.subgraph_count
            )
            lats.append(table.stitched_latency(constant, order.procs))
        out[task.task_id] = (min(accs), max(accs), min(lats), max(lats))
    return out


def generate_slo_configs(
    zoo: Zoo, table: ProfileTable, order: PlacementOrder | None = None
) -> list[SloConfig]:
    """The 5x5 grid: per task, five accuracy floors times five latency
    ceilings over the widened observed ranges.  Config ids run 0..24 from the
    loosest (low floor, high ceiling) to the strictest corner."""
    if order is None:
        order = default_fixed_order(table, zoo.tasks[0].subgraph_count)
    ranges = _variant_ranges(zoo, table, order)
    grids = {
        t: (accuracy_grid(a_lo, a_hi), latency_grid(l_lo, l_hi))
        for t, (a_lo, a_hi, l_lo, l_hi) in ranges.items()
    }
    configs = []
    for acc_idx in range(5):
        for lat_rank in range(5):
            config_id = acc_idx * 5 + lat_rank
            per_task = {
                t: SloBound(acc_points[acc_idx], lat_points[4 - lat_rank])
                for t, (acc_points, lat_points) in grids.items()
            }
            configs.append(SloConfig(config_id, per_task))
    return configs


def generate_guaranteed_slos(
    zoo: Zoo,
    table: ProfileTable,
    mode: str,
    order: PlacementOrder | None = None,
) -> list[SloConfig]:
    """Five configs pinning one axis to its extreme: accuracy_guaranteed
    fixes the floor at the best variant accuracy and sweeps latency ceilings
    over the raw range; latency_guaranteed fixes the ceiling at the fastest
    variant latency and sweeps accuracy floors."""
    if mode not in ("accuracy_guaranteed", "latency_guaranteed"):
        raise ValueError(f"unknown mode {mode!r}")
    if order is None:
        order = default_fixed_order(table, zoo.tasks[0].subgraph_count)
    ranges = _variant_ranges(zoo, table, order)
    configs = []
    for k in range(5):
        per_task = {}
        for t, (a_lo, a_hi, l_lo, l_hi) in ranges.items():
            if mode == "accuracy_guaranteed":
                per_task[t] = SloBound(a_hi, uniform_samples(l_lo, l_hi, 5)[k])
            else:
                per_task[t] = SloBound(uniform_samples(a_lo, a_hi, 5)[k], l_lo)
        configs.append(SloConfig(k, per_task))
    return configs


# ---------------------------------------------------------------------------
# Per-policy variant selection
# ---------------------------------------------------------------------------


def default_fixed_order(table: ProfileTable, subgraphs: int) -> PlacementOrder:
    """The conventional NPU-GPU-CPU pipeline when those names exist, else
    processors by descending id, truncated to the number of positions."""
    by_name = {p.name: p.proc_id for p in table.processors}
    if subgraphs <= 3 and {"NPU", "GPU", "CPU"} <= set(by_name):
        return PlacementOrder(tuple([by_name["NPU"], by_name["GPU"], by_name["CPU"]][:subgraphs]))
    ids = sorted((p.proc_id for p in table.processors), reverse=True)
    if subgraphs > len(ids):
        raise SimulationError(
            f"{subgraphs} positions cannot be pipelined on {len(ids)} processors"
        )
    return PlacementOrder(tuple(ids[:subgraphs]))


def _constant_map(task: Task, variant_index: int) -> StitchMap:
    return StitchMap(task.task_id, (variant_index,) * task.subgraph_count)


def _monolithic_placement(
    task: Task, variant_index: int, table: ProfileTable
) -> tuple[tuple[int, ...], float]:
    """Best single processor for running the whole variant, with its latency."""
    best: tuple[float, int] | None = None
    for proc in table.proc_ids():
        total = sum(
            lookup_latency(table, task.task_id, variant_index, j, proc)
            for j in range(1, task.subgraph_count + 1)
        )
        if best is None or (total, proc) < best:
            best = (total, proc)
    assert best is not None
    return (best[1],) * task.subgraph_count, best[0]


def select_for_policy(
    policy: Policy,
    task: Task,
    zoo: Zoo,
    table: ProfileTable,
    estimator: AccuracyEstimator | MeanAccuracyBaseline | Mapping[int, AccuracyEstimator] | None,
    slo: SloConfig,
    plan_result: PlanResult | None = None,
) -> tuple[StitchMap | None, tuple[int, ...] | None]:
    """The (variant, placement) a policy runs for one task, or (None, None)
    when the policy admits defeat (adaptive policies with nothing feasible)."""
    kind = policy.kind
    bound = slo.bound(task.task_id)
    fixed = (policy.fixed_order or default_fixed_order(table, task.subgraph_count)).procs
    variant_ids = [v.variant_index for v in zoo.variants_of(task.task_id)]

    if kind is PolicyKind.STITCHED:
        if plan_result is None:
            raise SimulationError("STITCHED selection requires a plan result")
        choice = plan_result.per_task_choice[task.task_id]
        if choice.dispatchable() and choice.stitch is not None:
            return choice.stitch, plan_result.best_order.procs
        return None, None

    if kind in (PolicyKind.SV_AO_P, PolicyKind.SV_AO_NP):
        best = min(variant_ids, key=lambda i: (-table.accuracy_of(task.task_id, i), i))
        stitch = _constant_map(task, best)
        if kind is PolicyKind.SV_AO_P:
            return stitch, fixed
        placement, _ = _monolithic_placement(task, best, table)
        return stitch, placement

    if kind is PolicyKind.SV_LO_P:
        best = min(
            variant_ids,
            key=lambda i: (table.stitched_latency(_constant_map(task, i), fixed), i),
        )
        return _constant_map(task, best), fixed

    if kind is PolicyKind.SV_LO_NP:
        best = min(
            variant_ids, key=lambda i: (_monolithic_placement(task, i, table)[1], i)
        )
        placement, _ = _monolithic_placement(task, best, table)
        return _constant_map(task, best), placement

    if kind in (PolicyKind.AV_P, PolicyKind.AV_NP):
        candidates: list[tuple[float, int, tuple[int, ...]]] = []
        for i in variant_ids:
            if table.accuracy_of(task.task_id, i) < bound.acc_floor:
                continue
            if kind is PolicyKind.AV_P:
                lat = table.stitched_latency(_constant_map(task, i), fixed)
                placement = fixed
            else:
                placement, lat = _monolithic_placement(task, i, table)
            if lat <= bound.lat_ceiling_ms:
                candidates.append((lat, i, placement))
        if not candidates:
            return None, None
        lat, i, placement = min(candidates)
        return _constant_map(task, i), placement

    raise SimulationError(f"unhandled policy {kind}")


# ---------------------------------------------------------------------------
# Event engine
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    query_latency_ms: dict[int, list[float]]
    completed: dict[int, int]
    makespan_ms: float
    switch_delay_ms: dict[int, float]
    busy_intervals: dict[int, list[tuple[float, float]]] | None = None

    def mean_latency(self, task_id: int) -> float:
        lats = self.query_latency_ms[task_id]
        return sum(lats) / len(lats)


def simulate_run(
    assignments: Mapping[int, tuple[StitchMap, tuple[int, ...]]],
    table: ProfileTable,
    queries_per_task: int,
    permutation: Sequence[int],
    comm_ms: float | None = None,
    switch_delays: Mapping[int, float] | None = None,
    collect_busy: bool = False,
) -> RunResult:
    """One closed-loop run; fully deterministic.

    Events are ordered by (time, sequence number); the sequence number rises
    monotonically as events are scheduled, so simultaneous arrivals keep the
    order they were issued in and reruns are bit-identical.
    """
    comm = table.comm_ms if comm_ms is None else comm_ms
    delays = switch_delays or {}
    for task_id, (stitch, placement) in assignments.items():
        if len(placement) != len(stitch.donors):
            raise SimulationError(
                f"task {task_id}: placement length {len(placement)} != "
                f"{len(stitch.donors)} positions"
            )
        for j, donor in enumerate(stitch.donors, start=1):
            if (task_id, donor, j, placement[j - 1]) not in table.subgraph_latency_ms:
                raise SimulationError(
                    f"plan references unknown subgraph (task={task_id}, "
                    f"variant={donor}, position={j}) on proc {placement[j - 1]}"
                )

    queues: dict[int, deque] = {}
    running: dict[int, tuple[int, int, int] | None] = {}
    for _, placement in assignments.values():
        for proc in placement:
            queues.setdefault(proc, deque())
            running.setdefault(proc, None)
    busy: dict[int, list[tuple[float, float]]] = {p: [] for p in queues}

    release_time: dict[tuple[int, int], float] = {}
    latencies: dict[int, list[float]] = {t: [] for t in assignments}
    completed = {t: 0 for t in assignments}
    makespan = 0.0

    events: list[tuple[float, int, str, tuple]] = []
    seq = 0

    def push(time: float, kind: str, data: tuple) -> None:
        nonlocal seq
        heapq.heappush(events, (time, seq, kind, data))
        seq += 1

    def start_stage(proc: int, time: float, stage: tuple[int, int, int]) -> None:
        task_id, _query, position = stage
        stitch, _placement = assignments[task_id]
        duration = lookup_latency(
            table, task_id, stitch.donors[position - 1], position, proc
        )
        running[proc] = stage
        if collect_busy:
            busy[proc].append((time, time + duration))
        push(time + duration, "finish", (proc,))

    def release_query(task_id: int, query: int, time: float) -> None:
        _stitch, placement = assignments[task_id]
        release_time[(task_id, query)] = time
        push(time, "arrive", (placement[0], (task_id, query, 1)))

    missing = set(assignments) - set(permutation)
    if missing:
        raise SimulationError(f"assigned tasks {sorted(missing)} absent from permutation")
    warmup = max((delays.get(t, 0.0) for t in assignments), default=0.0)
    for task_id in permutation:
        if task_id in assignments:
            release_query(task_id, 0, warmup)

    while events:
        time, _s, kind, data = heapq.heappop(events)
        if kind == "arrive":
            proc, stage = data
            if running[proc] is None:
                start_stage(proc, time, stage)
            else:
                queues[proc].append(stage)
        else:  # finish
            (proc,) = data
            stage = running[proc]
            assert stage is not None
            running[proc] = None
            if queues[proc]:
                start_stage(proc, time, queues[proc].popleft())
            task_id, query, position = stage
            stitch, placement = assignments[task_id]
            if position < len(stitch.donors):
                hop = comm if placement[position] != placement[position - 1] else 0.0
                push(time + hop, "arrive", (placement[position], (task_id, query, position + 1)))
            else:
                latencies[task_id].append(time - release_time[(task_id, query)])
                completed[task_id] += 1
                makespan = max(makespan, time)
                if query + 1 < queries_per_task:
                    release_query(task_id, query + 1, time)

    return RunResult(
        latencies,
        completed,
        makespan,
        {t: delays.get(t, 0.0) for t in assignments},
        busy if collect_busy else None,
    )


def measure_uncontended_latency(
    stitch: StitchMap,
    placement: tuple[int, ...],
    table: ProfileTable,
    comm_ms: float | None = None,
) -> float:
    """Single-query end-to-end latency through the event engine (no other
    tasks, no switch delay); the simulator-side counterpart of the analytic
    latency estimate."""
    result = simulate_run(
        {stitch.task_id: (stitch, placement)},
        table,
        queries_per_task=1,
        permutation=[stitch.task_id],
        comm_ms=comm_ms,
    )
    return result.query_latency_ms[stitch.task_id][0]


# ---------------------------------------------------------------------------
# Full runs
# ---------------------------------------------------------------------------


def _select_all(
    policy: Policy,
    workload: WorkloadSpec,
    zoo: Zoo,
    table: ProfileTable,
    estimator: AccuracyEstimator | MeanAccuracyBaseline | Mapping[int, AccuracyEstimator] | None,
    config: SloConfig,
    orders: Sequence[PlacementOrder] | None,
    plans: Mapping[int, PlanResult | None] | None,
) -> dict[int, tuple[StitchMap | None, tuple[int, ...] | None]]:
    plan_result = None
    if policy.kind is PolicyKind.STITCHED:
        if plans is not None and config.config_id in plans:
            plan_result = plans[config.config_id]
            if plan_result is None:  # precomputed: nothing feasible
                return {t.task_id: (None, None) for t in workload.tasks}
        else:
            if policy.use_estimator:
                if estimator is None:
                    raise SimulationError("use_estimator policy needs an estimator")
                accuracy_fn = optimizer.estimator_accuracy_fn(estimator, table)
            else:
                accuracy_fn = optimizer.truth_accuracy_fn(table)
            try:
                plan_result = optimizer.plan(
                    list(workload.tasks), zoo, table, accuracy_fn, config, orders
                )
            except optimizer.InfeasiblePlanError:
                return {t.task_id: (None, None) for t in workload.tasks}
    return {
        task.task_id: select_for_policy(
            policy, task, zoo, table, estimator, config, plan_result
        )
        for task in workload.tasks
    }


def run_simulation(
    workload: WorkloadSpec,
    policies: Sequence[Policy],
    configs: Sequence[SloConfig],
    zoo: Zoo,
    table: ProfileTable,
    estimator: AccuracyEstimator | MeanAccuracyBaseline | Mapping[int, AccuracyEstimator] | None = None,
    preload_plan: PreloadPlan | None = None,
    seed: int = 0,
    multipliers: SwitchMultipliers = SwitchMultipliers(),
    comm_ms: float | None = None,
    orders: Sequence[PlacementOrder] | None = None,
    plans: Mapping[int, PlanResult | None] | None = None,
) -> SimReport:
    """Simulate every (policy, config, arrival permutation) combination.

    Selection happens once per (policy, config); permutations only reorder
    the initial arrivals.  A task violates its SLO when it has no feasible
    variant, when its variant's true accuracy is below the floor, or when its
    mean per-query latency exceeds the ceiling.  preload_plan=None means
    everything is resident (no bring-up delay); precomputed plans keyed by
    config id short-circuit STITCHED planning.
    """
    if orders is None and workload.tasks:
        orders = enumerate_orders(table.proc_ids(), workload.tasks[0].subgraph_count)
    report = SimReport()
    total_tasks = len(workload.tasks)
    for policy in policies:
        for config in configs:
            selection = _select_all(
                policy, workload, zoo, table, estimator, config, orders, plans
            )
            assignments = {
                t: (stitch, placement)
                for t, (stitch, placement) in selection.items()
                if stitch is not None and placement is not None
            }
            delays = {
                t: switch_cost(stitch, preload_plan, table, placement, multipliers)
                for t, (stitch, placement) in assignments.items()
            }
            infeasible = total_tasks - len(assignments)
            for perm_idx, perm in enumerate(workload.arrival_permutations):
                result = simulate_run(
                    assignments,
                    table,
                    workload.queries_per_task,
                    perm,
                    comm_ms=comm_ms,
                    switch_delays=delays,
                )
                violations = infeasible
                task_means = []
                for t, (stitch, _placement) in assignments.items():
                    bound = config.bound(t)
                    mean_lat = result.mean_latency(t)
                    task_means.append(mean_lat)
                    if (
                        table.stitched_accuracy(stitch) < bound.acc_floor
                        or mean_lat > bound.lat_ceiling_ms
                    ):
                        violations += 1
                total_done = sum(result.completed.values())
                throughput = (
                    total_done / (result.makespan_ms / 1000.0)
                    if result.makespan_ms > 0
                    else 0.0
                )
                report.rows.append(
                    SimRow(
                        policy=policy.name,
                        config_id=config.config_id,
                        permutation_index=perm_idx,
                        seed=seed,
                        violation_rate=violations / total_tasks,
                        throughput_qps=throughput,
                        mean_latency_ms=sum(task_means) / len(task_means)
                        if task_means
                        else 0.0,
                        infeasible_tasks=infeasible,
                    )
                )
    return report


def aggregate(report: SimReport) -> list[tuple[str, int, float, float]]:
    """(policy, config_id) -> mean violation rate and mean throughput over
    every row in the report (permutations, and seeds if present)."""
    if not report.rows:
        raise SimulationError("cannot aggregate an empty report")
    groups: dict[tuple[str, int], list[SimRow]] = {}
    for row in report.rows:
        groups.setdefault((row.policy, row.config_id), []).append(row)
    out = []
    for (policy, config_id), rows in sorted(groups.items()):
        out.append(
            (
                policy,
                config_id,
                sum(r.violation_rate for r in rows) / len(rows),
                sum(r.throughput_qps for r in rows) / len(rows),
            )
        )
    return out


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------

_REPORT_COLUMNS = [
    "policy",
    "config_id",
    "permutation_index",
    "seed",
    "violation_rate",
    "throughput_qps",
    "mean_latency_ms",
    "infeasible_tasks",
]


def report_to_csv(report: SimReport, path: str | Path) -> None:
    lines = [",".join(_REPORT_COLUMNS)]
    for r in report.rows:
        lines.append(
            f"{r.policy},{r.config_id},{r.permutation_index},{r.seed},"
            f"{r.violation_rate!r},{r.throughput_qps!r},{r.mean_latency_ms!r},"
            f"{r.infeasible_tasks}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def report_from_csv(path: str | Path) -> SimReport:
    report = SimReport()
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            report.rows.append(
                SimRow(
                    policy=row["policy"],
                    config_id=int(row["config_id"]),
                    permutation_index=int(row["permutation_index"]),
                    seed=int(row["seed"]),
                    violation_rate=float(row["violation_rate"]),
                    throughput_qps=float(row["throughput_qps"]),
                    mean_latency_ms=float(row["mean_latency_ms"]),
                    infeasible_tasks=int(row["infeasible_tasks"]),
                )
            )
    return report


def summary_to_csv(summary: list[tuple[str, int, float, float]], path: str | Path) -> None:
    lines = ["policy,config_id,mean_violation_rate,mean_throughput_qps"]
    for policy, config_id, viol, thr in summary:
        lines.append(f"{policy},{config_id},{viol!r},{thr!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")
