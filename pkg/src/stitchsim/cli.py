"""Command-line interface: every pipeline stage plus the experiment runner.

All commands are pure functions of their input files, flags, and seed; output
files are written atomically (temp then rename) so reruns with identical
inputs are byte-identical.  Exit codes: 0 success, 1 runtime failure (with a
single-line JSON error on stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import estimator as est_mod
from . import experiments as exp_mod
from . import optimizer as opt_mod
from . import preloader as pre_mod
from . import profiles as prof_mod
from . import simulator as sim_mod
from . import zoo as zoo_mod
from .ioutil import atomic_write_text


def _dump_json(path: str, doc) -> None:
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True))


def _parse_policies(spec: str) -> list[sim_mod.Policy]:
    by_value = {k.value: k for k in sim_mod.PolicyKind}
    kinds = []
    for name in spec.split(","):
        name = name.strip()
        if name == "all":
            kinds.extend(sim_mod.PolicyKind)
            continue
        if name not in by_value:
            raise ValueError(
                f"unknown policy {name!r}; choose from {sorted(by_value)} or 'all'"
            )
        kinds.append(by_value[name])
    return [sim_mod.Policy(k) for k in kinds]


def _load_world(args) -> tuple[zoo_mod.Zoo, prof_mod.ProfileTable]:
    zoo = zoo_mod.load_zoo(args.zoo)
    table = prof_mod.load_table(args.profiles)
    return zoo, table


def _train_estimators(zoo, table, n, seed):
    models = {}
    for task in zoo.tasks:
        samples = est_mod.sample_training_set(task, table, n, seed)
        models[task.task_id] = est_mod.train_accuracy_estimator(samples, seed=seed)
    return models


def cmd_gen_zoo(args) -> int:
    zoo = zoo_mod.template_zoo(args.template, args.tasks, args.subgraphs)
    doc = zoo_mod.zoo_to_dict(zoo)
    doc["template"] = args.template
    _dump_json(args.out, doc)
    return 0


def cmd_gen_profiles(args) -> int:
    zoo = zoo_mod.load_zoo(args.zoo)
    params = prof_mod.SyntheticParams(
        latency_jitter=args.lat_jitter, stitch_accuracy_noise=args.sigma_acc
    )
    table = prof_mod.generate_synthetic(
        zoo, prof_mod.default_processors(), params, args.seed, comm_ms=args.comm_ms
    )
    _dump_json(args.out, prof_mod.table_to_dict(table))
    return 0


def cmd_stitch(args) -> int:
    zoo = zoo_mod.load_zoo(args.zoo)
    if args.count_only:
        total = 0
        for task in zoo.tasks:
            total += zoo_mod.stitched_variant_count(
                1, task.variant_count, task.subgraph_count
            )
        print(total)
        return 0
    doc = {
        "tasks": [
            {
                "task_id": task.task_id,
                "maps": [list(m.donors) for m in zoo_mod.enumerate_stitched(task)],
            }
            for task in zoo.tasks
            if args.task is None or task.task_id == args.task
        ]
    }
    if not doc["tasks"]:
        raise ValueError(f"no task with id {args.task} in zoo")
    if args.out is None:
        raise ValueError("--out is required unless --count-only is given")
    _dump_json(args.out, doc)
    return 0


def cmd_profile(args) -> int:
    zoo, table = _load_world(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lat_lines = ["task_id,variant_index,position,proc_id,proc_name,latency_ms"]
    for (t, i, j, p), v in sorted(table.subgraph_latency_ms.items()):
        lat_lines.append(f"{t},{i},{j},{p},{table.proc_name(p)},{v!r}")
    atomic_write_text(out_dir / "latency.csv", "\n".join(lat_lines) + "\n")

    models = _train_estimators(zoo, table, args.train_n, args.seed)
    recall_lines = ["seed,task_id,K,recall"]
    for task in zoo.tasks:
        candidates = zoo_mod.enumerate_stitched(task)
        for k in (1, 5, 10):
            if k > len(candidates):
                continue
            recall = est_mod.top_k_recall(models[task.task_id], candidates, table, k)
            recall_lines.append(f"{args.seed},{task.task_id},{k},{recall!r}")
    atomic_write_text(out_dir / "estimator_recall.csv", "\n".join(recall_lines) + "\n")

    orders = opt_mod.enumerate_orders(table.proc_ids(), zoo.tasks[0].subgraph_count)
    estimates, truths = [], []
    for task in zoo.tasks:
        for stitch in zoo_mod.enumerate_stitched(task)[:50]:
            for order in orders[:2]:
                estimates.append(est_mod.estimate_latency(stitch, order.procs, table))
                truths.append(
                    sim_mod.measure_uncontended_latency(stitch, order.procs, table)
                )
    mae, mape = est_mod.latency_error(estimates, truths)
    atomic_write_text(
        out_dir / "estimator_latency_error.csv",
        "seed,MAE_ms,MAPE\n" + f"{args.seed},{mae!r},{mape!r}\n",
    )
    return 0


def cmd_slo_gen(args) -> int:
    zoo, table = _load_world(args)
    if args.mode == "grid25":
        configs = sim_mod.generate_slo_configs(zoo, table)
    else:
        configs = sim_mod.generate_guaranteed_slos(zoo, table, args.mode)
    doc = {"mode": args.mode, "seed": table.generation_seed}
    doc["configs"] = [opt_mod.slo_config_to_dict(c) for c in configs]
    _dump_json(args.out, doc)
    return 0


def cmd_optimize(args) -> int:
    zoo, table = _load_world(args)
    configs = opt_mod.load_slo_configs(args.slo)
    if args.config_id is not None:
        configs = [c for c in configs if c.config_id == args.config_id]
        if not configs:
            raise ValueError(f"no config with id {args.config_id} in {args.slo}")
    if args.use_estimator:
        models = _train_estimators(zoo, table, args.train_n, args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    orders = opt_mod.enumerate_orders(table.proc_ids(), zoo.tasks[0].subgraph_count)
    for config in configs:
        try:
            if args.use_estimator:
                per_task_feasible = {}
                for task in zoo.tasks:
                    fn = opt_mod.estimator_accuracy_fn(models[task.task_id], table)
                    per_task_feasible[task.task_id] = opt_mod.filter_feasible(
                        task,
                        zoo_mod.enumerate_stitched(task),
                        fn,
                        table,
                        config.bound(task.task_id),
                        orders,
                    )
                best_order, mean_lat = opt_mod.choose_order(per_task_feasible, table, orders)
                choices = opt_mod.select_final_variants(per_task_feasible, table, best_order, config)
                result = opt_mod.PlanResult(config.config_id, best_order, choices, mean_lat)
            else:
                result = opt_mod.plan(
                    list(zoo.tasks), zoo, table, opt_mod.truth_accuracy_fn(table), config, orders
                )
            doc = opt_mod.plan_to_dict(result, table)
        except opt_mod.InfeasiblePlanError:
            doc = {
                "config_id": config.config_id,
                "best_order": None,
                "per_task": [
                    {"task_id": t.task_id, "donors": "infeasible"} for t in zoo.tasks
                ],
                "mean_latency_ms": None,
            }
        if args.use_estimator:
            doc["seed"] = args.seed
        _dump_json(out_dir / f"plan_config_{config.config_id:02d}.json", doc)
    return 0


def cmd_preload(args) -> int:
    zoo, table = _load_world(args)
    configs = opt_mod.load_slo_configs(args.slo)
    orders = opt_mod.enumerate_orders(table.proc_ids(), zoo.tasks[0].subgraph_count)
    truth = opt_mod.truth_accuracy_fn(table)
    sets = {}
    for task in zoo.tasks:
        candidates = zoo_mod.enumerate_stitched(task)
        for config in configs:
            sets[(task.task_id, config.config_id)] = opt_mod.filter_feasible(
                task, candidates, truth, table, config.bound(task.task_id), orders
            )
    hotness = pre_mod.compute_hotness(sets, len(configs))
    if args.budget_bytes is not None:
        budget = args.budget_bytes
    else:
        budget = int(args.budget_frac * prof_mod.full_preload_memory(zoo))
    plan = pre_mod.greedy_preload(hotness, zoo, budget)
    doc = pre_mod.plan_to_dict(plan)
    doc["budget_frac"] = args.budget_frac if args.budget_bytes is None else None
    _dump_json(args.out, doc)
    return 0


def cmd_simulate(args) -> int:
    zoo, table = _load_world(args)
    configs = opt_mod.load_slo_configs(args.slo)
    policies = _parse_policies(args.policy)
    if args.permutations == "all":
        perms = sim_mod.all_permutations(zoo.tasks)
    else:
        perms = sim_mod.all_permutations(zoo.tasks)[: int(args.permutations)]
    workload = sim_mod.WorkloadSpec(zoo.tasks, args.queries, perms)
    preload = pre_mod.load_plan(args.preload) if args.preload else None
    plans = None
    if args.plan:
        plan_path = Path(args.plan)
        files = sorted(plan_path.glob("plan_config_*.json")) if plan_path.is_dir() else [plan_path]
        if not files:
            raise ValueError(f"no plan files found under {args.plan}")
        plans = {}
        for f in files:
            doc = json.loads(f.read_text())
            plans[int(doc["config_id"])] = opt_mod.plan_from_dict(doc, table)
    estimator = None
    if args.use_estimator:
        estimator = _train_estimators(zoo, table, args.train_n, args.seed)
        policies = [
            sim_mod.Policy(p.kind, p.fixed_order, use_estimator=True)
            if p.kind is sim_mod.PolicyKind.STITCHED
            else p
            for p in policies
        ]
    report = sim_mod.run_simulation(
        workload,
        policies,
        configs,
        zoo,
        table,
        estimator=estimator,
        preload_plan=preload,
        seed=args.seed,
        multipliers=pre_mod.SwitchMultipliers(args.compile_x, args.load_x),
        comm_ms=args.comm_ms,
        plans=plans,
    )
    lines = ["policy,config_id,permutation_index,seed,violation_rate,throughput_qps,mean_latency_ms,infeasible_tasks"]
    for r in report.rows:
        lines.append(
            f"{r.policy},{r.config_id},{r.permutation_index},{r.seed},"
            f"{r.violation_rate!r},{r.throughput_qps!r},{r.mean_latency_ms!r},{r.infeasible_tasks}"
        )
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    return 0


def cmd_experiment(args) -> int:
    doc = json.loads(Path(args.spec).read_text())
    spec = exp_mod.spec_from_dict(doc)
    exp_mod.run_experiment(spec, args.out_dir)
    return 0


def cmd_report(args) -> int:
    report = sim_mod.report_from_csv(args.infile)
    if args.emit != "summary":
        raise ValueError(f"unknown emit target {args.emit!r}")
    summary = sim_mod.aggregate(report)
    lines = ["policy,config_id,mean_violation_rate,mean_throughput_qps"]
    for policy, config_id, viol, thr in summary:
        lines.append(f"{policy},{config_id},{viol!r},{thr!r}")
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stitchsim",
        description="Multi-DNN inference pipeline with model stitching",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-zoo", help="write a template model zoo")
    p.add_argument("--template", choices=["intel", "jetson"], default="intel")
    p.add_argument("--tasks", type=int, default=4)
    p.add_argument("--subgraphs", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_zoo)

    p = sub.add_parser("gen-profiles", help="fabricate a synthetic ground-truth world")
    p.add_argument("--zoo", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma-acc", type=float, default=0.5)
    p.add_argument("--lat-jitter", type=float, default=0.05)
    p.add_argument("--comm-ms", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_profiles)

    p = sub.add_parser("stitch", help="enumerate stitched variants")
    p.add_argument("--zoo", required=True)
    p.add_argument("--count-only", action="store_true")
    p.add_argument("--task", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_stitch)

    p = sub.add_parser("profile", help="export latency CSV and estimator evaluation")
    p.add_argument("--zoo", required=True)
    p.add_argument("--profiles", required=True)
    p.add_argument("--train-n", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("gen-slos", help="generate SLO configuration sweeps")
    p.add_argument("--zoo", required=True)
    p.add_argument("--profiles", required=True)
    p.add_argument(
        "--mode",
        choices=["grid25", "accuracy_guaranteed", "latency_guaranteed"],
        default="grid25",
    )
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_slo_gen)

    p = sub.add_parser("optimize", help="plan placement order and variants per config")
    p.add_argument("--zoo", required=True)
    p.add_argument("--profiles", required=True)
    p.add_argument("--slo", required=True)
    p.add_argument("--config-id", type=int, default=None)
    p.add_argument("--use-estimator", action="store_true")
    p.add_argument("--train-n", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("preload", help="compute hotness and a preload plan")
    p.add_argument("--zoo", required=True)
    p.add_argument("--profiles", required=True)
    p.add_argument("--slo", required=True)
    p.add_argument("--budget-frac", type=float, default=1.0)
    p.add_argument("--budget-bytes", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preload)

    p = sub.add_parser("simulate", help="run the discrete-event simulation")
    p.add_argument("--zoo", required=True)
    p.add_argument("--profiles", required=True)
    p.add_argument("--slo", required=True)
    p.add_argument("--policy", default="all")
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--permutations", default="all")
    p.add_argument("--plan", default=None, help="plan file or directory from optimize")
    p.add_argument("--preload", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--comm-ms", type=float, default=None)
    p.add_argument("--compile-x", type=float, default=23.7)
    p.add_argument("--load-x", type=float, default=3.0)
    p.add_argument("--use-estimator", action="store_true")
    p.add_argument("--train-n", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", help="run a canned experiment bundle")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="aggregate a simulation report")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--emit", default="summary")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # runtime error: single machine-parseable line
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
