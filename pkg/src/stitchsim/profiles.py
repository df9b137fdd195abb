"""Ground-truth performance profiles and their synthetic generation.

A ProfileTable stores everything the rest of the pipeline treats as measured
reality: per-subgraph latency on every processor, per-variant accuracy, and
the true accuracy of every stitched variant.  Real hardware profiling is out
of scope, so generate_synthetic() fabricates a reproducible world from a
seed: latencies follow a work/speed model with multiplicative jitter, and
stitched-variant accuracy is the mean of the donor variants' accuracies plus
Gaussian noise (exact on constant donor vectors so original variants keep
their measured accuracy).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .ioutil import atomic_write_text
from .zoo import StitchMap, Zoo

LatencyKey = tuple[int, int, int, int]  # (task_id, variant_index, position, proc_id)


class ProfileError(ValueError):
    """Invalid profile data or generation parameters."""


class MissingProfileEntry(KeyError):
    """A latency or accuracy lookup hit a key that is not in the table."""


@dataclass(frozen=True)
class Processor:
    proc_id: int
    name: str
    speed_factor: float

    def __post_init__(self) -> None:
        if self.speed_factor <= 0:
            raise ProfileError(f"processor {self.name}: speed_factor must be positive")


def default_processors() -> tuple[Processor, ...]:
    """CPU/GPU/NPU trio used by the templates; NPU is the fastest."""
    return (
        Processor(1, "CPU", 1.0),
        Processor(2, "GPU", 2.2),
        Processor(3, "NPU", 3.5),
    )


@dataclass(frozen=True)
class SyntheticParams:
    """Knobs for the synthetic profile generator.

    Latency of subgraph (t, i, j) on processor p:
        base_work_ms * task_factor(t) * position_weight(j)
        * precision_speed[precision] * (1 - level_speedup[kind] * level)
        / speed_factor(p)
    jittered multiplicatively by Uniform[1 - latency_jitter, 1 + latency_jitter].

    Variant accuracy: base_accuracy - task_accuracy_step*(t-1) - penalty + jitter,
    where the penalty depends on compression kind, level, and precision.  The
    default penalties keep the top few variants of a task well separated so
    small stitched-accuracy noise does not scramble the head of the ranking.
    """

    base_work_ms: float = 10.0
    task_work_spread: float = 0.4
    position_weights: tuple[float, ...] = (1.0, 1.35, 0.75)
    precision_speed: Mapping[str, float] = field(
        default_factory=lambda: {"FP32": 1.0, "FP16": 0.7, "INT8": 0.5}
    )
    level_speedup: Mapping[str, float] = field(
        default_factory=lambda: {
            "dense": 0.0,
            "unstructured_pruned": 0.45,
            "structured_pruned": 0.7,
            "quantized": 0.0,
        }
    )
    latency_jitter: float = 0.05
    base_accuracy: float = 95.0
    task_accuracy_step: float = 1.5
    precision_acc_penalty: Mapping[str, float] = field(
        default_factory=lambda: {"FP32": 0.0, "FP16": 2.5, "INT8": 7.0}
    )
    # Accuracy drop vs sparsity level, piecewise linear between knots
    # (clamped outside); values chosen so the template ladders have a
    # well-separated head.
    prune_acc_penalty: Mapping[str, tuple[tuple[float, float], ...]] = field(
        default_factory=lambda: {
            "unstructured_pruned": ((0.65, 12.0), (0.70, 17.0), (0.90, 25.0)),
            "structured_pruned": ((0.20, 8.0), (0.40, 17.5), (0.50, 22.0)),
        }
    )
    accuracy_jitter: float = 0.25
    stitch_accuracy_noise: float = 0.5

    def validate(self) -> None:
        if not 0.0 <= self.latency_jitter < 1.0:
            raise ProfileError("latency_jitter must be in [0, 1)")
        if self.stitch_accuracy_noise < 0 or self.accuracy_jitter < 0:
            raise ProfileError("accuracy noise parameters must be nonnegative")
        if self.base_work_ms <= 0 or self.base_accuracy <= 0:
            raise ProfileError("base_work_ms and base_accuracy must be positive")
        for name, mapping in (
            ("precision_speed", self.precision_speed),
            ("level_speedup", self.level_speedup),
            ("precision_acc_penalty", self.precision_acc_penalty),
        ):
            for k, val in mapping.items():
                if val < 0:
                    raise ProfileError(f"{name}[{k}] must be nonnegative")
        if any(w <= 0 for w in self.position_weights):
            raise ProfileError("position_weights must be positive")

    def work_ms(self, task_id: int, position: int) -> float:
        task_factor = 1.0 + self.task_work_spread * (task_id - 1)
        weight = self.position_weights[(position - 1) % len(self.position_weights)]
        return self.base_work_ms * task_factor * weight

    def kind_scaling(self, kind: str, precision: str, level: float) -> float:
        speed = self.precision_speed[precision]
        return speed * (1.0 - self.level_speedup[kind] * level)

    def accuracy_penalty(self, kind: str, precision: str, level: float) -> float:
        penalty = self.precision_acc_penalty[precision]
        if kind in self.prune_acc_penalty:
            knots = self.prune_acc_penalty[kind]
            levels = [k[0] for k in knots]
            drops = [k[1] for k in knots]
            penalty += float(np.interp(level, levels, drops))
        return penalty


class ProfileTable:
    """Immutable ground truth: latency, accuracy, and stitched-accuracy maps."""

    def __init__(
        self,
        subgraph_latency_ms: Mapping[LatencyKey, float],
        variant_accuracy: Mapping[tuple[int, int], float],
        stitched_accuracy_truth: Mapping[tuple[int, tuple[int, ...]], float],
        processors: Iterable[Processor],
        generation_seed: int = 0,
        comm_ms: float = 0.0,
        gen_params: SyntheticParams | None = None,
    ):
        self.subgraph_latency_ms = dict(subgraph_latency_ms)
        self.variant_accuracy = dict(variant_accuracy)
        self.stitched_accuracy_truth = dict(stitched_accuracy_truth)
        self.processors = tuple(sorted(processors, key=lambda p: p.proc_id))
        if [p.proc_id for p in self.processors] != list(range(1, len(self.processors) + 1)):
            raise ProfileError(
                f"processor ids must be 1..P with no gaps, got "
                f"{[p.proc_id for p in self.processors]}"
            )
        self.generation_seed = generation_seed
        self.comm_ms = comm_ms
        self.gen_params = gen_params
        for key, lat in self.subgraph_latency_ms.items():
            if lat <= 0:
                raise ProfileError(f"latency for {key} must be positive, got {lat}")
        for key, acc in self.variant_accuracy.items():
            if not 0.0 <= acc <= 100.0:
                raise ProfileError(f"accuracy for {key} outside [0, 100]: {acc}")

    def proc_ids(self) -> tuple[int, ...]:
        return tuple(p.proc_id for p in self.processors)

    def proc_name(self, proc_id: int) -> str:
        for p in self.processors:
            if p.proc_id == proc_id:
                return p.name
        raise MissingProfileEntry(f"unknown processor id {proc_id}")

    def accuracy_of(self, task_id: int, variant_index: int) -> float:
        try:
            return self.variant_accuracy[(task_id, variant_index)]
        except KeyError:
            raise MissingProfileEntry(
                f"no accuracy entry for variant ({task_id},{variant_index})"
            ) from None

    def stitched_accuracy(self, stitch: StitchMap) -> float:
        try:
            return self.stitched_accuracy_truth[(stitch.task_id, stitch.donors)]
        except KeyError:
            raise MissingProfileEntry(
                f"no stitched accuracy entry for task {stitch.task_id} donors "
                f"{stitch.donors}"
            ) from None

    def stitched_latency(self, stitch: StitchMap, placement: tuple[int, ...]) -> float:
        """End-to-end latency of a stitched variant under a processor placement.

        Sums per-subgraph latencies; the per-hop communication constant is
        charged between consecutive positions executing on different
        processors (so a monolithic one-processor placement pays none, and an
        injective pipeline order pays comm_ms * (S - 1)).
        """
        if len(placement) != len(stitch.donors):
            raise ProfileError(
                f"placement has {len(placement)} entries for "
                f"{len(stitch.donors)} subgraph positions"
            )
        total = 0.0
        for position, donor in enumerate(stitch.donors, start=1):
            total += lookup_latency(
                self, stitch.task_id, donor, position, placement[position - 1]
            )
            if self.comm_ms and position > 1 and placement[position - 1] != placement[position - 2]:
                total += self.comm_ms
        return total


def lookup_latency(
    table: ProfileTable, task_id: int, variant_index: int, position: int, proc_id: int
) -> float:
    key = (task_id, variant_index, position, proc_id)
    try:
        return table.subgraph_latency_ms[key]
    except KeyError:
        raise MissingProfileEntry(
            f"no latency entry for (task={task_id}, variant={variant_index}, "
            f"position={position}, proc={proc_id})"
        ) from None


def full_preload_memory(zoo: Zoo) -> int:
    """Bytes needed to keep every subgraph of every variant resident."""
    return sum(s.mem_bytes for s in zoo.all_subgraphs())


def generate_synthetic(
    zoo: Zoo,
    processors: Iterable[Processor],
    gen_params: SyntheticParams | None = None,
    seed: int = 0,
    comm_ms: float = 0.0,
) -> ProfileTable:
    """Fabricate a deterministic ground-truth world for a zoo.

    All randomness flows from ``seed`` through numpy's PCG64 generator; keys
    are visited in sorted order so two calls with equal inputs produce
    bit-identical tables.
    """
    params = gen_params or SyntheticParams()
    params.validate()
    procs = tuple(sorted(processors, key=lambda p: p.proc_id))
    rng = np.random.default_rng(seed)

    latency: dict[LatencyKey, float] = {}
    accuracy: dict[tuple[int, int], float] = {}
    for task in zoo.tasks:
        base_acc = params.base_accuracy - params.task_accuracy_step * (task.task_id - 1)
        for variant in zoo.variants_of(task.task_id):
            scaling = params.kind_scaling(
                variant.sparsity_kind, variant.precision, variant.sparsity_level
            )
            for sub in variant.subgraphs:
                for proc in procs:
                    jitter = 1.0 + params.latency_jitter * rng.uniform(-1.0, 1.0)
                    latency[(task.task_id, variant.variant_index, sub.position, proc.proc_id)] = (
                        params.work_ms(task.task_id, sub.position)
                        * scaling
                        / proc.speed_factor
                        * jitter
                    )
            penalty = params.accuracy_penalty(
                variant.sparsity_kind, variant.precision, variant.sparsity_level
            )
            noise = params.accuracy_jitter * rng.uniform(-1.0, 1.0)
            accuracy[(task.task_id, variant.variant_index)] = float(
                np.clip(base_acc - penalty + noise, 0.0, 100.0)
            )

    from .zoo import enumerate_stitched  # local to avoid a cycle warning in docs

    stitched: dict[tuple[int, tuple[int, ...]], float] = {}
    for task in zoo.tasks:
        for stitch in enumerate_stitched(task):
            donor_accs = [accuracy[(task.task_id, d)] for d in stitch.donors]
            noise = rng.normal(0.0, params.stitch_accuracy_noise) if params.stitch_accuracy_noise > 0 else 0.0
            value = float(np.clip(sum(donor_accs) / len(donor_accs) + noise, 0.0, 100.0))
            if stitch.is_constant():
                value = accuracy[(task.task_id, stitch.donors[0])]
            stitched[(task.task_id, stitch.donors)] = value

    for task in zoo.tasks:  # constant-donor consistency, by construction
        for i in range(1, task.variant_count + 1):
            constant = (i,) * task.subgraph_count
            assert stitched[(task.task_id, constant)] == accuracy[(task.task_id, i)]

    return ProfileTable(
        latency,
        accuracy,
        stitched,
        procs,
        generation_seed=seed,
        comm_ms=comm_ms,
        gen_params=params,
    )


# ---------------------------------------------------------------------------
# Measured placement-sensitivity fixture
# ---------------------------------------------------------------------------

# End-to-end latency (ms) of six stitched image-classifier variants under all
# six non-overlapping CPU/GPU/NPU orders, measured on an Intel desktop SoC.
# Variant labels are donor kinds per position (D=dense, P=pruned, Q=quantized);
# order labels are processor initials per position.
PLACEMENT_SENSITIVITY_MS: dict[str, dict[str, float]] = {
    "N-G-C": {"P-Q-P": 12.05, "P-P-Q": 16.91, "D-D-P": 14.77, "D-P-Q": 17.73, "Q-P-D": 18.25, "P-D-Q": 16.99},
    "C-G-N": {"P-Q-P": 11.01, "P-P-Q": 13.40, "D-D-P": 14.45, "D-P-Q": 15.56, "Q-P-D": 20.27, "P-D-Q": 13.48},
    "G-C-N": {"P-Q-P": 13.20, "P-P-Q": 13.69, "D-D-P": 13.51, "D-P-Q": 12.14, "Q-P-D": 12.17, "P-D-Q": 15.54},
    "G-N-C": {"P-Q-P": 12.98, "P-P-Q": 14.22, "D-D-P": 13.49, "D-P-Q": 14.57, "Q-P-D": 13.63, "P-D-Q": 16.51},
    "N-C-G": {"P-Q-P": 15.72, "P-P-Q": 11.93, "D-D-P": 17.39, "D-P-Q": 12.01, "Q-P-D": 13.79, "P-D-Q": 15.73},
    "C-N-G": {"P-Q-P": 13.72, "P-P-Q": 10.77, "D-D-P": 15.40, "D-P-Q": 12.88, "Q-P-D": 18.21, "P-D-Q": 12.51},
}

# Donor kind letters map onto a three-variant mini zoo: 1=D, 2=P, 3=Q.
FIXTURE_DONOR_OF_LETTER = {"D": 1, "P": 2, "Q": 3}
FIXTURE_PROC_OF_LETTER = {"C": 1, "G": 2, "N": 3}


def _label_to_donors(label: str) -> tuple[int, ...]:
    return tuple(FIXTURE_DONOR_OF_LETTER[part] for part in label.split("-"))


def _label_to_procs(label: str) -> tuple[int, ...]:
    return tuple(FIXTURE_PROC_OF_LETTER[part] for part in label.split("-"))


class EndToEndLatencyFixture:
    """Published whole-variant latencies keyed by (donor vector, placement).

    Only the sums were published, so this exposes the same stitched_latency()
    surface as ProfileTable without any per-subgraph decomposition.
    """

    def __init__(self, task_id: int = 1):
        self.task_id = task_id
        self.entries: dict[tuple[tuple[int, ...], tuple[int, ...]], float] = {}
        for order_label, row in PLACEMENT_SENSITIVITY_MS.items():
            for variant_label, ms in row.items():
                self.entries[(_label_to_donors(variant_label), _label_to_procs(order_label))] = ms

    def lookup(self, variant_label: str, order_label: str) -> float:
        try:
            return PLACEMENT_SENSITIVITY_MS[order_label][variant_label]
        except KeyError:
            raise MissingProfileEntry(
                f"no fixture entry for variant {variant_label!r} under order "
                f"{order_label!r}"
            ) from None

    def stitched_latency(self, stitch: StitchMap, placement: tuple[int, ...]) -> float:
        key = (stitch.donors, tuple(placement))
        try:
            return self.entries[key]
        except KeyError:
            raise MissingProfileEntry(
                f"no fixture entry for donors {stitch.donors} under placement "
                f"{tuple(placement)}"
            ) from None

    def stitch_maps(self) -> list[StitchMap]:
        donors = sorted({d for d, _ in self.entries})
        return [StitchMap(self.task_id, d) for d in donors]

    def placements(self) -> list[tuple[int, ...]]:
        return sorted({p for _, p in self.entries})


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def table_to_dict(table: ProfileTable) -> dict:
    params = table.gen_params
    return {
        "seed": table.generation_seed,
        "comm_ms": table.comm_ms,
        "gen_params": None
        if params is None
        else {
            "base_work_ms": params.base_work_ms,
            "task_work_spread": params.task_work_spread,
            "position_weights": list(params.position_weights),
            "precision_speed": dict(params.precision_speed),
            "level_speedup": dict(params.level_speedup),
            "latency_jitter": params.latency_jitter,
            "base_accuracy": params.base_accuracy,
            "task_accuracy_step": params.task_accuracy_step,
            "precision_acc_penalty": dict(params.precision_acc_penalty),
            "prune_acc_penalty": {
                k: [list(pair) for pair in v] for k, v in params.prune_acc_penalty.items()
            },
            "accuracy_jitter": params.accuracy_jitter,
            "stitch_accuracy_noise": params.stitch_accuracy_noise,
        },
        "processors": [
            {"proc_id": p.proc_id, "name": p.name, "speed_factor": p.speed_factor}
            for p in table.processors
        ],
        "subgraph_latency_ms": [
            {"task_id": t, "variant_index": i, "position": j, "proc_id": p, "latency_ms": v}
            for (t, i, j, p), v in sorted(table.subgraph_latency_ms.items())
        ],
        "variant_accuracy": [
            {"task_id": t, "variant_index": i, "accuracy": v}
            for (t, i), v in sorted(table.variant_accuracy.items())
        ],
        "stitched_accuracy_truth": [
            {"task_id": t, "donors": list(d), "accuracy": v}
            for (t, d), v in sorted(table.stitched_accuracy_truth.items())
        ],
    }


def table_from_dict(doc: dict) -> ProfileTable:
    gp = doc.get("gen_params")
    params = None
    if gp is not None:
        params = SyntheticParams(
            base_work_ms=gp["base_work_ms"],
            task_work_spread=gp["task_work_spread"],
            position_weights=tuple(gp["position_weights"]),
            precision_speed=gp["precision_speed"],
            level_speedup=gp["level_speedup"],
            latency_jitter=gp["latency_jitter"],
            base_accuracy=gp["base_accuracy"],
            task_accuracy_step=gp["task_accuracy_step"],
            precision_acc_penalty=gp["precision_acc_penalty"],
            prune_acc_penalty={
                k: tuple(tuple(pair) for pair in v)
                for k, v in gp["prune_acc_penalty"].items()
            },
            accuracy_jitter=gp["accuracy_jitter"],
            stitch_accuracy_noise=gp["stitch_accuracy_noise"],
        )
    return ProfileTable(
        {
            (r["task_id"], r["variant_index"], r["position"], r["proc_id"]): r["latency_ms"]
            for r in doc["subgraph_latency_ms"]
        },
        {(r["task_id"], r["variant_index"]): r["accuracy"] for r in doc["variant_accuracy"]},
        {
            (r["task_id"], tuple(r["donors"])): r["accuracy"]
            for r in doc["stitched_accuracy_truth"]
        },
        [Processor(p["proc_id"], p["name"], p["speed_factor"]) for p in doc["processors"]],
        generation_seed=doc["seed"],
        comm_ms=doc.get("comm_ms", 0.0),
        gen_params=params,
    )


def save_table(table: ProfileTable, path: str | Path) -> None:
    atomic_write_text(path, json.dumps(table_to_dict(table), indent=2, sort_keys=True))


def load_table(path: str | Path) -> ProfileTable:
    return table_from_dict(json.loads(Path(path).read_text()))


def export_latency_csv(table: ProfileTable, path: str | Path) -> None:
    """Flat CSV of the latency map for external inspection."""
    lines = ["task_id,variant_index,position,proc_id,proc_name,latency_ms"]
    for (t, i, j, p), v in sorted(table.subgraph_latency_ms.items()):
        lines.append(f"{t},{i},{j},{p},{table.proc_name(p)},{v!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")
