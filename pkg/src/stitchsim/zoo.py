"""Model zoos: tasks, sparse variants, layer-aligned subgraphs, stitching.

A task owns V sparse variants of one base model, each split into the same S
consecutive layer blocks ("subgraphs").  Because the partition boundaries are
identical across variants, the position-j subgraph of any variant can stand in
for the position-j subgraph of any other.  A stitched variant is therefore
fully identified by its donor vector: which variant supplies the subgraph at
each position.  There are exactly V**S donor vectors per task, and the
constant vectors (i, i, ..., i) reproduce the original zoo.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Iterable, Sequence

from .ioutil import atomic_write_text

SPARSITY_KINDS = ("dense", "unstructured_pruned", "structured_pruned", "quantized")
PRECISIONS = ("FP32", "FP16", "INT8")


class ZooError(ValueError):
    """Invalid zoo structure or contents."""


class MissingVariantError(KeyError):
    """A donor index does not correspond to any variant in the zoo."""


@dataclass(frozen=True)
class Task:
    """One inference task with a sparse model zoo of ``variant_count`` variants."""

    task_id: int
    name: str
    variant_count: int
    subgraph_count: int

    def __post_init__(self) -> None:
        if self.variant_count < 1 or self.subgraph_count < 1:
            raise ZooError(
                f"task {self.task_id}: variant_count and subgraph_count must be >= 1"
            )


@dataclass(frozen=True)
class Subgraph:
    """A consecutive layer block of one variant, keyed by (task, variant, position)."""

    task_id: int
    variant_index: int
    position: int
    mem_bytes: int

    def __post_init__(self) -> None:
        if self.mem_bytes < 0:
            raise ZooError(f"subgraph {self.key()}: mem_bytes must be nonnegative")

    def key(self) -> tuple[int, int, int]:
        return (self.task_id, self.variant_index, self.position)


@dataclass(frozen=True)
class SparseVariant:
    """A compressed (or dense) model variant, split into ordered subgraphs."""

    task_id: int
    variant_index: int
    sparsity_kind: str
    sparsity_level: float
    precision: str
    subgraphs: tuple[Subgraph, ...]

    def __post_init__(self) -> None:
        if self.sparsity_kind not in SPARSITY_KINDS:
            raise ZooError(f"unknown sparsity_kind {self.sparsity_kind!r}")
        if self.precision not in PRECISIONS:
            raise ZooError(f"unknown precision {self.precision!r}")
        if not 0.0 <= self.sparsity_level <= 1.0:
            raise ZooError(f"sparsity_level {self.sparsity_level} outside [0, 1]")
        if self.sparsity_kind == "dense" and (
            self.sparsity_level != 0.0 or self.precision != "FP32"
        ):
            raise ZooError(
                f"variant ({self.task_id},{self.variant_index}): a dense base "
                "model has sparsity_level 0 and FP32 precision"
            )
        for j, sub in enumerate(self.subgraphs, start=1):
            if sub.position != j:
                raise ZooError(
                    f"variant ({self.task_id},{self.variant_index}): subgraph at "
                    f"slot {j} carries position {sub.position}"
                )
            if sub.task_id != self.task_id or sub.variant_index != self.variant_index:
                raise ZooError(
                    f"variant ({self.task_id},{self.variant_index}): subgraph "
                    f"{sub.key()} does not belong to this variant"
                )


@dataclass(frozen=True)
class StitchMap:
    """Donor vector of a stitched variant: donors[j-1] supplies position j."""

    task_id: int
    donors: tuple[int, ...]

    def is_constant(self) -> bool:
        return len(set(self.donors)) == 1


class Zoo:
    """Immutable collection of tasks and their variants."""

    def __init__(self, tasks: Iterable[Task], variants: Iterable[SparseVariant]):
        self.tasks: tuple[Task, ...] = tuple(sorted(tasks, key=lambda t: t.task_id))
        self._by_task: dict[int, dict[int, SparseVariant]] = {
            t.task_id: {} for t in self.tasks
        }
        self._task_by_id: dict[int, Task] = {t.task_id: t for t in self.tasks}
        if len(self._task_by_id) != len(self.tasks):
            raise ZooError("duplicate task_id")
        for v in variants:
            if v.task_id not in self._by_task:
                raise ZooError(f"variant references unknown task {v.task_id}")
            if v.variant_index in self._by_task[v.task_id]:
                raise ZooError(f"duplicate variant ({v.task_id},{v.variant_index})")
            self._by_task[v.task_id][v.variant_index] = v
        for t in self.tasks:
            have = self._by_task[t.task_id]
            if sorted(have) != list(range(1, t.variant_count + 1)):
                raise ZooError(
                    f"task {t.task_id}: variant indices {sorted(have)} do not "
                    f"cover 1..{t.variant_count}"
                )
            for v in have.values():
                if len(v.subgraphs) != t.subgraph_count:
                    raise ZooError(
                        f"variant ({t.task_id},{v.variant_index}) has "
                        f"{len(v.subgraphs)} subgraphs, task declares "
                        f"{t.subgraph_count}"
                    )

    def task(self, task_id: int) -> Task:
        return self._task_by_id[task_id]

    def variants_of(self, task_id: int) -> list[SparseVariant]:
        return [self._by_task[task_id][i] for i in sorted(self._by_task[task_id])]

    def variant(self, task_id: int, variant_index: int) -> SparseVariant:
        try:
            return self._by_task[task_id][variant_index]
        except KeyError:
            raise MissingVariantError(
                f"no variant ({task_id},{variant_index}) in zoo"
            ) from None

    def subgraph(self, task_id: int, variant_index: int, position: int) -> Subgraph:
        return self.variant(task_id, variant_index).subgraphs[position - 1]

    def all_subgraphs(self) -> list[Subgraph]:
        out = []
        for t in self.tasks:
            for v in self.variants_of(t.task_id):
                out.extend(v.subgraphs)
        return out


def enumerate_stitched(task: Task) -> list[StitchMap]:
    """All V**S stitched variants of a task, in lexicographic donor order."""
    v, s = task.variant_count, task.subgraph_count
    return [
        StitchMap(task.task_id, donors)
        for donors in product(range(1, v + 1), repeat=s)
    ]


def resolve_subgraphs(
    stitch: StitchMap, variants: Sequence[SparseVariant]
) -> list[Subgraph]:
    """Materialize a stitched variant: position j comes from donor variants[donors[j]]."""
    by_index = {v.variant_index: v for v in variants}
    out = []
    for position, donor in enumerate(stitch.donors, start=1):
        if donor not in by_index:
            raise MissingVariantError(
                f"stitch map for task {stitch.task_id} names donor {donor} at "
                f"position {position}, but no such variant exists"
            )
        out.append(by_index[donor].subgraphs[position - 1])
    return out


def stitched_variant_count(num_tasks: int, variants_per_task: int, subgraphs: int) -> int:
    """Total stitched variants across all tasks: T * V**S.

    Python integers are arbitrary precision, so the product cannot overflow
    or wrap; callers always receive the exact count.
    """
    if num_tasks < 1 or variants_per_task < 1 or subgraphs < 1:
        raise ZooError("num_tasks, variants_per_task, and subgraphs must be >= 1")
    return num_tasks * variants_per_task**subgraphs


# ---------------------------------------------------------------------------
# Built-in zoo templates
# ---------------------------------------------------------------------------

# Four edge tasks with plausible base-model footprints (bytes).
_TEMPLATE_TASKS = (
    ("image_classification", 170_000_000),
    ("sentiment_classification", 420_000_000),
    ("activity_recognition", 88_000_000),
    ("speech_recognition", 360_000_000),
)

# (sparsity_kind, sparsity_level, precision) for each variant slot.
INTEL_VARIANT_PATTERNS = (
    ("dense", 0.0, "FP32"),
    ("quantized", 0.0, "INT8"),
    ("unstructured_pruned", 0.90, "FP32"),
    ("unstructured_pruned", 0.85, "FP32"),
    ("unstructured_pruned", 0.80, "FP32"),
    ("unstructured_pruned", 0.75, "FP32"),
    ("unstructured_pruned", 0.70, "FP32"),
    ("unstructured_pruned", 0.65, "FP32"),
    ("structured_pruned", 0.40, "FP32"),
    ("structured_pruned", 0.50, "FP32"),
)

JETSON_VARIANT_PATTERNS = (
    ("dense", 0.0, "FP32"),
    ("quantized", 0.0, "FP16"),
    ("quantized", 0.0, "INT8"),
    ("structured_pruned", 0.20, "FP32"),
    ("structured_pruned", 0.30, "FP32"),
    ("structured_pruned", 0.35, "FP32"),
    ("structured_pruned", 0.40, "FP32"),
    ("structured_pruned", 0.45, "FP32"),
    ("structured_pruned", 0.50, "FP32"),
    ("structured_pruned", 0.55, "FP32"),
)

_PRECISION_BYTES_FRACTION = {"FP32": 1.0, "FP16": 0.5, "INT8": 0.25}


def template_zoo(
    flavor: str = "intel",
    num_tasks: int = 4,
    subgraphs: int = 3,
    variants_per_task: int | None = None,
) -> Zoo:
    """Build the shipped ten-variant-per-task zoo template.

    Per-subgraph memory is the base model's footprint split evenly over
    positions, scaled by (1 - sparsity_level) and by the per-precision byte
    fraction.  The "custom" flavor cycles the intel variant patterns to any
    requested variant count.
    """
    if flavor == "custom":
        base_patterns = INTEL_VARIANT_PATTERNS
        count = variants_per_task or len(base_patterns)
        patterns = tuple(base_patterns[(i - 1) % len(base_patterns)] for i in range(1, count + 1))
    elif flavor in ("intel", "jetson"):
        patterns = INTEL_VARIANT_PATTERNS if flavor == "intel" else JETSON_VARIANT_PATTERNS
        if variants_per_task is not None and variants_per_task != len(patterns):
            patterns = tuple(
                patterns[(i - 1) % len(patterns)] for i in range(1, variants_per_task + 1)
            )
    else:
        raise ZooError(f"unknown template flavor {flavor!r}")
    tasks = []
    variants = []
    for t in range(1, num_tasks + 1):
        name, base_bytes = _TEMPLATE_TASKS[(t - 1) % len(_TEMPLATE_TASKS)]
        if t > len(_TEMPLATE_TASKS):
            name = f"{name}_{(t - 1) // len(_TEMPLATE_TASKS) + 1}"
        tasks.append(Task(t, name, len(patterns), subgraphs))
        per_position = base_bytes // subgraphs
        for i, (kind, level, precision) in enumerate(patterns, start=1):
            mem = int(round(per_position * (1.0 - level) * _PRECISION_BYTES_FRACTION[precision]))
            subs = tuple(
                Subgraph(t, i, j, mem) for j in range(1, subgraphs + 1)
            )
            variants.append(SparseVariant(t, i, kind, level, precision, subs))
    return Zoo(tasks, variants)


# ---------------------------------------------------------------------------
# JSON round trip
# ---------------------------------------------------------------------------


def zoo_to_dict(zoo: Zoo) -> dict:
    return {
        "tasks": [
            {
                "task_id": t.task_id,
                "name": t.name,
                "S": t.subgraph_count,
                "variants": [
                    {
                        "variant_index": v.variant_index,
                        "sparsity_kind": v.sparsity_kind,
                        "sparsity_level": v.sparsity_level,
                        "precision": v.precision,
                        "subgraph_mem_bytes": [s.mem_bytes for s in v.subgraphs],
                    }
                    for v in zoo.variants_of(t.task_id)
                ],
            }
            for t in zoo.tasks
        ]
    }


def zoo_from_dict(doc: dict) -> Zoo:
    tasks = []
    variants = []
    for td in doc["tasks"]:
        s = int(td["S"])
        tasks.append(Task(int(td["task_id"]), td["name"], len(td["variants"]), s))
        for vd in td["variants"]:
            i = int(vd["variant_index"])
            mems = vd["subgraph_mem_bytes"]
            if len(mems) != s:
                raise ZooError(
                    f"variant ({td['task_id']},{i}): expected {s} subgraph "
                    f"memory entries, got {len(mems)}"
                )
            subs = tuple(
                Subgraph(int(td["task_id"]), i, j, int(m))
                for j, m in enumerate(mems, start=1)
            )
            variants.append(
                SparseVariant(
                    int(td["task_id"]),
                    i,
                    vd["sparsity_kind"],
                    float(vd["sparsity_level"]),
                    vd["precision"],
                    subs,
                )
            )
    return Zoo(tasks, variants)


def save_zoo(zoo: Zoo, path: str | Path) -> None:
    atomic_write_text(path, json.dumps(zoo_to_dict(zoo), indent=2, sort_keys=True))


def load_zoo(path: str | Path) -> Zoo:
    return zoo_from_dict(json.loads(Path(path).read_text()))
