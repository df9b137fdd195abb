from __future__ import annotations

from itertools import product

import pytest

from stitchsim import profiles as pf
from stitchsim import zoo as zm


@pytest.fixture(scope="session")
def intel_zoo():
    return zm.template_zoo("intel", 4, 3)


@pytest.fixture(scope="session")
def table0(intel_zoo):
    return pf.generate_synthetic(intel_zoo, pf.default_processors(), seed=0)


def make_dense_zoo(num_tasks: int, variants: int, subgraphs: int, mem: int = 10) -> zm.Zoo:
    """Uniform all-dense zoo for hand-built worlds."""
    tasks = []
    records = []
    for t in range(1, num_tasks + 1):
        tasks.append(zm.Task(t, f"task{t}", variants, subgraphs))
        for i in range(1, variants + 1):
            subs = tuple(zm.Subgraph(t, i, j, mem) for j in range(1, subgraphs + 1))
            records.append(zm.SparseVariant(t, i, "dense", 0.0, "FP32", subs))
    return zm.Zoo(tasks, records)


def make_table(
    zoo: zm.Zoo,
    latency: dict,
    accuracy: dict,
    stitched: dict | None = None,
    comm_ms: float = 0.0,
    processors=None,
) -> pf.ProfileTable:
    """Hand-built ground truth; stitched accuracy defaults to the exact mean
    of donor accuracies (original variants stay exact on constant vectors)."""
    procs = processors or pf.default_processors()
    if stitched is None:
        stitched = {}
        for task in zoo.tasks:
            v, s = task.variant_count, task.subgraph_count
            for donors in product(range(1, v + 1), repeat=s):
                accs = [accuracy[(task.task_id, d)] for d in donors]
                stitched[(task.task_id, donors)] = sum(accs) / len(accs)
            for i in range(1, v + 1):
                stitched[(task.task_id, (i,) * s)] = accuracy[(task.task_id, i)]
    return pf.ProfileTable(latency, accuracy, stitched, procs, comm_ms=comm_ms)


def fill_latency(zoo: zm.Zoo, values) -> dict:
    """latency[(t,i,j,p)] from values(t,i,j,p); values may be a callable or a
    constant."""
    fn = values if callable(values) else (lambda *_: values)
    out = {}
    for task in zoo.tasks:
        for i in range(1, task.variant_count + 1):
            for j in range(1, task.subgraph_count + 1):
                for p in (1, 2, 3):
                    out[(task.task_id, i, j, p)] = fn(task.task_id, i, j, p)
    return out
