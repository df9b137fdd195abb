"""Canned experiment recipes wiring the whole pipeline end to end.

Each sweep builds a zoo from a template, fabricates one synthetic world per
seed, runs the relevant stages, and writes a bundle of JSON/CSV artifacts
into an output directory.  Bundles are pure functions of the experiment spec
(file contents are byte-identical across reruns), so diffs between runs only
ever reflect spec changes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import estimator as est_mod
from . import optimizer as opt_mod
from . import preloader as pre_mod
from . import profiles as prof_mod
from . import simulator as sim_mod
from . import zoo as zoo_mod
from .ioutil import atomic_write_text

SWEEPS = (
    "slo25",
    "acc_guaranteed",
    "lat_guaranteed",
    "budget",
    "order_sensitivity",
    "profiling_cost",
    "estimator_eval",
)

ALL_POLICY_KINDS = tuple(sim_mod.PolicyKind)


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    sweep: str
    zoo_template: str = "intel"
    num_tasks: int = 4
    variants_per_task: int = 10
    subgraphs: int = 3
    processors: int = 3
    seeds: tuple[int, ...] = tuple(range(10))
    budgets: tuple[float, ...] = (0.15, 0.35, 0.55, 0.75, 1.0)
    queries_per_task: int = 100
    permutation_limit: int | None = None
    train_samples: int = 50
    comm_ms: float = 0.0
    gen_params: prof_mod.SyntheticParams = field(default_factory=prof_mod.SyntheticParams)

    def validate(self) -> None:
        if self.sweep not in SWEEPS:
            raise ValueError(f"unknown sweep {self.sweep!r}; choose one of {SWEEPS}")
        if self.zoo_template not in ("intel", "jetson", "custom"):
            raise ValueError(f"unknown zoo template {self.zoo_template!r}")
        for frac in self.budgets:
            if not 0.0 <= frac <= 1.0:
                raise ValueError(f"budget fraction {frac} outside [0, 1]")


def spec_from_dict(doc: dict) -> ExperimentSpec:
    kwargs = dict(doc)
    if "seeds" in kwargs:
        kwargs["seeds"] = tuple(int(s) for s in kwargs["seeds"])
    if "budgets" in kwargs:
        kwargs["budgets"] = tuple(float(b) for b in kwargs["budgets"])
    kwargs.pop("gen_params", None)
    return ExperimentSpec(**kwargs)


def spec_to_dict(spec: ExperimentSpec) -> dict:
    return {
        "name": spec.name,
        "sweep": spec.sweep,
        "zoo_template": spec.zoo_template,
        "num_tasks": spec.num_tasks,
        "variants_per_task": spec.variants_per_task,
        "subgraphs": spec.subgraphs,
        "processors": spec.processors,
        "seeds": list(spec.seeds),
        "budgets": list(spec.budgets),
        "queries_per_task": spec.queries_per_task,
        "permutation_limit": spec.permutation_limit,
        "train_samples": spec.train_samples,
        "comm_ms": spec.comm_ms,
    }


def _write_json(path: Path, doc) -> None:
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True))


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _build_zoo(spec: ExperimentSpec) -> zoo_mod.Zoo:
    return zoo_mod.template_zoo(
        spec.zoo_template, spec.num_tasks, spec.subgraphs, spec.variants_per_task
    )


def _workload(spec: ExperimentSpec, zoo: zoo_mod.Zoo) -> sim_mod.WorkloadSpec:
    perms = sim_mod.all_permutations(zoo.tasks)
    if spec.permutation_limit is not None:
        perms = perms[: spec.permutation_limit]
    return sim_mod.WorkloadSpec(zoo.tasks, spec.queries_per_task, perms)


def _table_for_seed(spec: ExperimentSpec, zoo: zoo_mod.Zoo, seed: int) -> prof_mod.ProfileTable:
    return prof_mod.generate_synthetic(
        zoo, prof_mod.default_processors(), spec.gen_params, seed, comm_ms=spec.comm_ms
    )


def _satisfying_sets(
    zoo: zoo_mod.Zoo,
    table: prof_mod.ProfileTable,
    configs: Sequence[opt_mod.SloConfig],
    orders: Sequence[opt_mod.PlacementOrder],
) -> dict[tuple[int, int], list[zoo_mod.StitchMap]]:
    truth = opt_mod.truth_accuracy_fn(table)
    sets = {}
    for task in zoo.tasks:
        candidates = zoo_mod.enumerate_stitched(task)
        for config in configs:
            sets[(task.task_id, config.config_id)] = opt_mod.filter_feasible(
                task, candidates, truth, table, config.bound(task.task_id), orders
            )
    return sets


def run_experiment(spec: ExperimentSpec, out_dir: str | Path) -> dict[str, Path]:
    """Run one sweep and write its artifact bundle; returns the files written."""
    spec.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}

    def emit_json(name: str, doc) -> None:
        path = out / name
        _write_json(path, doc)
        written[name] = path

    def emit_csv(name: str, header, rows) -> None:
        path = out / name
        _write_csv(path, header, rows)
        written[name] = path

    emit_json("experiment.json", spec_to_dict(spec))

    if spec.sweep == "order_sensitivity":
        fixture = prof_mod.EndToEndLatencyFixture()
        rows = []
        best_rows = []
        variants = sorted({v for row in prof_mod.PLACEMENT_SENSITIVITY_MS.values() for v in row})
        orders = sorted(prof_mod.PLACEMENT_SENSITIVITY_MS)
        for order in orders:
            for variant in variants:
                rows.append([order, variant, fixture.lookup(variant, order)])
        for variant in variants:
            best_order = min(orders, key=lambda o: (fixture.lookup(variant, o), o))
            best_rows.append([variant, best_order, fixture.lookup(variant, best_order)])
        emit_csv("order_latency.csv", ["order", "variant", "latency_ms"], rows)
        emit_csv("best_order.csv", ["variant", "best_order", "latency_ms"], best_rows)
        return written

    if spec.sweep == "profiling_cost":
        rows = []
        for t in range(1, 9):
            rows.append(
                [
                    t,
                    3,
                    spec.subgraphs,
                    spec.processors,
                    est_mod.profiling_cost(t, 3, spec.subgraphs, spec.processors, False, False),
                    est_mod.profiling_cost(t, 3, spec.subgraphs, spec.processors, True, False),
                    est_mod.profiling_cost(t, 3, spec.subgraphs, spec.processors, True, True),
                ]
            )
        emit_csv(
            "cost_vs_tasks.csv",
            ["T", "V", "S", "P", "runs_no_stitching", "runs_stitching", "runs_estimators"],
            rows,
        )
        rows = []
        for v in range(2, 11):
            rows.append(
                [
                    spec.num_tasks,
                    v,
                    spec.subgraphs,
                    spec.processors,
                    est_mod.profiling_cost(spec.num_tasks, v, spec.subgraphs, spec.processors, False, False),
                    est_mod.profiling_cost(spec.num_tasks, v, spec.subgraphs, spec.processors, True, False),
                    est_mod.profiling_cost(spec.num_tasks, v, spec.subgraphs, spec.processors, True, True),
                ]
            )
        emit_csv(
            "cost_vs_variants.csv",
            ["T", "V", "S", "P", "runs_no_stitching", "runs_stitching", "runs_estimators"],
            rows,
        )
        return written

    zoo = _build_zoo(spec)
    zoo_mod.save_zoo(zoo, out / "zoo.json")
    written["zoo.json"] = out / "zoo.json"
    workload = _workload(spec, zoo)
    orders = opt_mod.enumerate_orders(
        tuple(p.proc_id for p in prof_mod.default_processors()), spec.subgraphs
    )

    if spec.sweep == "estimator_eval":
        recall_rows = []
        laterr_rows = []
        for seed in spec.seeds:
            table = _table_for_seed(spec, zoo, seed)
            prof_mod.save_table(table, out / f"profiles_seed{seed}.json")
            written[f"profiles_seed{seed}.json"] = out / f"profiles_seed{seed}.json"
            for task in zoo.tasks:
                samples = est_mod.sample_training_set(task, table, spec.train_samples, seed)
                model = est_mod.train_accuracy_estimator(samples, seed=seed)
                candidates = zoo_mod.enumerate_stitched(task)
                for k in (1, 5, 10):
                    if k > len(candidates):
                        continue
                    recall = est_mod.top_k_recall(model, candidates, table, k)
                    recall_rows.append([seed, task.task_id, k, recall])
            estimates = []
            truths = []
            for task in zoo.tasks:
                for stitch in zoo_mod.enumerate_stitched(task)[:50]:
                    for order in orders[:2]:
                        estimates.append(est_mod.estimate_latency(stitch, order.procs, table))
                        truths.append(
                            sim_mod.measure_uncontended_latency(stitch, order.procs, table)
                        )
            mae, mape = est_mod.latency_error(estimates, truths)
            laterr_rows.append([seed, mae, mape])
        emit_csv("estimator_recall.csv", ["seed", "task_id", "K", "recall"], recall_rows)
        emit_csv("estimator_latency_error.csv", ["seed", "MAE_ms", "MAPE"], laterr_rows)
        t, v, s, p = spec.num_tasks, spec.variants_per_task, spec.subgraphs, spec.processors
        emit_csv(
            "profiling_runs.csv",
            ["quantity", "runs"],
            [
                ["estimator_profiling_runs", est_mod.profiling_cost(t, v, s, p, True, True)],
                ["training_truth_runs", t * spec.train_samples],
            ],
        )
        return written

    if spec.sweep == "budget":
        sweep_rows = []
        report = sim_mod.SimReport()
        for seed in spec.seeds:
            table = _table_for_seed(spec, zoo, seed)
            configs = sim_mod.generate_slo_configs(zoo, table)
            if seed == spec.seeds[0]:
                opt_mod.save_slo_configs(configs, out / "slos.json", {"seed": seed})
                written["slos.json"] = out / "slos.json"
            sets = _satisfying_sets(zoo, table, configs, orders)
            hotness = pre_mod.compute_hotness(sets, len(configs))
            full_mem = prof_mod.full_preload_memory(zoo)
            truth = opt_mod.truth_accuracy_fn(table)
            plans: dict[int, opt_mod.PlanResult | None] = {}
            for config in configs:
                try:
                    plans[config.config_id] = opt_mod.plan(
                        list(zoo.tasks), zoo, table, truth, config, orders
                    )
                except opt_mod.InfeasiblePlanError:
                    plans[config.config_id] = None
            for frac in spec.budgets:
                budget = int(frac * full_mem)
                preload = pre_mod.greedy_preload(hotness, zoo, budget)
                if seed == spec.seeds[0]:
                    name = f"preload_{int(round(frac * 100)):03d}.json"
                    pre_mod.save_plan(preload, out / name)
                    written[name] = out / name
                part = sim_mod.run_simulation(
                    workload,
                    [sim_mod.Policy(sim_mod.PolicyKind.STITCHED)],
                    configs,
                    zoo,
                    table,
                    preload_plan=preload,
                    seed=seed,
                    orders=orders,
                    plans=plans,
                )
                viol = sum(r.violation_rate for r in part.rows) / len(part.rows)
                thr = sum(r.throughput_qps for r in part.rows) / len(part.rows)
                sweep_rows.append([seed, frac, budget, viol, thr])
                report.rows.extend(part.rows)
        emit_csv(
            "budget_sweep.csv",
            ["seed", "budget_frac", "budget_bytes", "mean_violation_rate", "mean_throughput_qps"],
            sweep_rows,
        )
        sim_mod.report_to_csv(report, out / "report.csv")
        written["report.csv"] = out / "report.csv"
        return written

    # slo25 / acc_guaranteed / lat_guaranteed: all policies, full grid.
    report = sim_mod.SimReport()
    for seed in spec.seeds:
        table = _table_for_seed(spec, zoo, seed)
        prof_mod.save_table(table, out / f"profiles_seed{seed}.json")
        written[f"profiles_seed{seed}.json"] = out / f"profiles_seed{seed}.json"
        if spec.sweep == "slo25":
            configs = sim_mod.generate_slo_configs(zoo, table)
        else:
            mode = (
                "accuracy_guaranteed" if spec.sweep == "acc_guaranteed" else "latency_guaranteed"
            )
            configs = sim_mod.generate_guaranteed_slos(zoo, table, mode)
        if seed == spec.seeds[0]:
            opt_mod.save_slo_configs(configs, out / "slos.json", {"seed": seed})
            written["slos.json"] = out / "slos.json"
            plans_dir = out / "plans"
            plans_dir.mkdir(exist_ok=True)
            for config in configs:
                try:
                    result = opt_mod.plan(
                        list(zoo.tasks), zoo, table, opt_mod.truth_accuracy_fn(table), config, orders
                    )
                except opt_mod.InfeasiblePlanError:
                    continue
                opt_mod.save_plan(result, plans_dir / f"config_{config.config_id:02d}.json", table)
                written[f"plans/config_{config.config_id:02d}.json"] = (
                    plans_dir / f"config_{config.config_id:02d}.json"
                )
        policies = [sim_mod.Policy(kind) for kind in ALL_POLICY_KINDS]
        part = sim_mod.run_simulation(
            workload, policies, configs, zoo, table, seed=seed, orders=orders
        )
        report.rows.extend(part.rows)
    sim_mod.report_to_csv(report, out / "report.csv")
    written["report.csv"] = out / "report.csv"
    summary = sim_mod.aggregate(report)
    sim_mod.summary_to_csv(summary, out / "summary.csv")
    written["summary.csv"] = out / "summary.csv"
    return written
