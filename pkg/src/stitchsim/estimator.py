"""Accuracy and latency estimation for stitched variants.

Profiling every stitched variant is exponential in the subgraph count, so the
pipeline predicts instead.  Accuracy: each original variant's measured
accuracy is assigned to all of its subgraphs; a stitched variant's feature
vector is the per-position donor accuracy, and a regressor trained on a small
profiled sample maps features to accuracy.  Latency: analytic, the sum of the
donor subgraphs' measured latencies on their assigned processors.

Two accuracy predictors ship: a gradient-boosted model (mean of the feature
vector plus a boosted residual correction) and a plain mean-of-features
baseline that is exact when stitched accuracy is noise-free, kept as an
independent reference.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.ensemble import GradientBoostingRegressor

from .profiles import ProfileTable
from .zoo import StitchMap, Task, enumerate_stitched


class EstimatorError(ValueError):
    """Invalid estimator inputs (empty samples, bad dimensions, bad K...)."""


@dataclass(frozen=True)
class AccuracyFeature:
    """Per-position donor accuracies of one stitched variant."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.values:
            raise EstimatorError("feature vector must have at least one position")
        for v in self.values:
            if not 0.0 <= v <= 100.0:
                raise EstimatorError(f"feature value {v} outside [0, 100]")


def extract_features(stitch: StitchMap, table: ProfileTable) -> AccuracyFeature:
    """Feature vector: the measured accuracy of each position's donor variant."""
    return AccuracyFeature(
        tuple(table.accuracy_of(stitch.task_id, donor) for donor in stitch.donors)
    )


class MeanAccuracyBaseline:
    """Reference predictor: the mean of the donor accuracies, clamped."""

    train_sample_count = 0
    train_seed = 0

    def __init__(self, dimensions: int):
        self.dimensions = dimensions

    def predict(self, feature: AccuracyFeature) -> float:
        if len(feature.values) != self.dimensions:
            raise EstimatorError(
                f"feature has {len(feature.values)} positions, baseline expects "
                f"{self.dimensions}"
            )
        return min(100.0, max(0.0, sum(feature.values) / len(feature.values)))


class AccuracyEstimator:
    """Trained regressor: mean of features plus a boosted residual model."""

    def __init__(
        self,
        model: GradientBoostingRegressor,
        dimensions: int,
        train_sample_count: int,
        train_seed: int,
    ):
        self._model = model
        self.dimensions = dimensions
        self.train_sample_count = train_sample_count
        self.train_seed = train_seed

    def predict(self, feature: AccuracyFeature) -> float:
        if len(feature.values) != self.dimensions:
            raise EstimatorError(
                f"feature has {len(feature.values)} positions, estimator was "
                f"trained on {self.dimensions}"
            )
        x = np.asarray(feature.values, dtype=float).reshape(1, -1)
        raw = float(np.mean(x)) + float(self._model.predict(x)[0])
        return min(100.0, max(0.0, raw))

    def predict_many(self, features: Sequence[AccuracyFeature]) -> list[float]:
        for f in features:
            if len(f.values) != self.dimensions:
                raise EstimatorError(
                    f"feature has {len(f.values)} positions, estimator was "
                    f"trained on {self.dimensions}"
                )
        x = np.asarray([f.values for f in features], dtype=float)
        raw = x.mean(axis=1) + self._model.predict(x)
        return [min(100.0, max(0.0, float(v))) for v in raw]


DEFAULT_HYPERPARAMS = {"n_estimators": 200, "max_depth": 2, "learning_rate": 0.1}


def train_accuracy_estimator(
    samples: Sequence[tuple[AccuracyFeature, float]],
    hyperparams: dict | None = None,
    seed: int = 0,
) -> AccuracyEstimator:
    """Fit the boosted residual model on (feature, true accuracy) pairs."""
    if not samples:
        raise EstimatorError("cannot train on an empty sample set")
    dims = len(samples[0][0].values)
    for feat, acc in samples:
        if len(feat.values) != dims:
            raise EstimatorError("inconsistent feature dimensions in training set")
        if not 0.0 <= acc <= 100.0:
            raise EstimatorError(f"training accuracy {acc} outside [0, 100]")
    x = np.asarray([f.values for f, _ in samples], dtype=float)
    y = np.asarray([a for _, a in samples], dtype=float)
    if len(samples) > 1 and np.all(x == x[0]):
        warnings.warn("all training features are identical; estimator is degenerate")
    residual = y - x.mean(axis=1)
    hp = dict(DEFAULT_HYPERPARAMS)
    hp.update(hyperparams or {})
    model = GradientBoostingRegressor(random_state=seed, **hp)
    model.fit(x, residual)
    return AccuracyEstimator(model, dims, len(samples), seed)


def predict_accuracy(
    est: AccuracyEstimator | MeanAccuracyBaseline, feature: AccuracyFeature
) -> float:
    return est.predict(feature)


def sample_training_set(
    task: Task, table: ProfileTable, n: int = 50, seed: int = 0
) -> list[tuple[AccuracyFeature, float]]:
    """Draw n stitched variants uniformly (seeded) and pair features with truth."""
    maps = enumerate_stitched(task)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(maps), size=min(n, len(maps)), replace=False)
    out = []
    for idx in sorted(int(c) for c in chosen):
        stitch = maps[idx]
        out.append((extract_features(stitch, table), table.stitched_accuracy(stitch)))
    return out


def estimate_latency(
    stitch: StitchMap, placement: tuple[int, ...], table
) -> float:
    """End-to-end latency estimate: sum of per-subgraph latencies plus comm."""
    return table.stitched_latency(stitch, tuple(placement))


def profiling_cost(
    num_tasks: int,
    variants_per_task: int,
    subgraphs: int,
    processors: int,
    with_stitching: bool,
    with_estimators: bool,
) -> int:
    """Number of profiling runs for a given zoo shape.

    With estimators, only original variants are measured: T*V accuracy runs
    plus T*S*V*P per-subgraph latency runs.  Without estimators, every
    variant (T*V, or T*V**S when stitching) is measured once for accuracy and
    once per placement order (P! orders) for latency.
    """
    t, v, s, p = num_tasks, variants_per_task, subgraphs, processors
    if min(t, v, s, p) < 1:
        raise EstimatorError("all profiling-cost inputs must be >= 1")
    if with_estimators:
        return t * v + t * s * v * p
    variants = t * v**s if with_stitching else t * v
    return variants * (math.factorial(p) + 1)


def top_k_recall(
    est: AccuracyEstimator | MeanAccuracyBaseline,
    candidate_maps: Sequence[StitchMap],
    table: ProfileTable,
    k: int,
) -> float:
    """Fraction of the true top-K candidates recovered by the predictor.

    Both rankings break ties by lexicographic donor vector, lowest first.
    """
    if k <= 0:
        raise EstimatorError(f"K must be positive, got {k}")
    if k > len(candidate_maps):
        raise EstimatorError(f"K={k} exceeds candidate count {len(candidate_maps)}")

    def top_set(scores: list[float]) -> set[tuple[int, ...]]:
        ranked = sorted(
            zip(scores, candidate_maps), key=lambda sv: (-sv[0], sv[1].donors)
        )
        return {stitch.donors for _, stitch in ranked[:k]}

    truths = [table.stitched_accuracy(m) for m in candidate_maps]
    if isinstance(est, AccuracyEstimator):
        preds = est.predict_many([extract_features(m, table) for m in candidate_maps])
    else:
        preds = [est.predict(extract_features(m, table)) for m in candidate_maps]
    return len(top_set(truths) & top_set(preds)) / k


def latency_error(
    estimates: Sequence[float], truths: Sequence[float]
) -> tuple[float, float]:
    """(MAE, MAPE) of latency estimates against ground truth."""
    if len(estimates) != len(truths):
        raise EstimatorError(
            f"length mismatch: {len(estimates)} estimates vs {len(truths)} truths"
        )
    if not estimates:
        raise EstimatorError("cannot compute error on empty inputs")
    for t in truths:
        if t < 1e-9:
            raise EstimatorError(f"truth {t} too close to zero for MAPE")
    abs_err = [abs(e - t) for e, t in zip(estimates, truths)]
    mae = sum(abs_err) / len(abs_err)
    mape = sum(err / t for err, t in zip(abs_err, truths)) / len(truths)
    return mae, mape
