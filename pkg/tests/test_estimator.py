from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stitchsim import estimator as em
from stitchsim import profiles as pf
from stitchsim import zoo as zm
from stitchsim.zoo import StitchMap
from tests.conftest import fill_latency, make_dense_zoo, make_table
from tests.test_profiles import quiet_params, two_variant_zoo


def hand_table(accs: dict[int, float], subgraphs: int = 3) -> pf.ProfileTable:
    zoo = make_dense_zoo(1, len(accs), subgraphs)
    latency = fill_latency(zoo, 1.0)
    return make_table(zoo, latency, {(1, i): a for i, a in accs.items()})


def test_extract_features_lookup():
    table = hand_table({1: 92.0, 2: 88.0, 3: 85.0})
    feat = em.extract_features(StitchMap(1, (1, 3, 1)), table)
    assert feat.values == (92.0, 85.0, 92.0)


def test_extract_features_constant_and_single():
    table = hand_table({1: 92.0, 2: 88.0}, subgraphs=2)
    assert em.extract_features(StitchMap(1, (2, 2)), table).values == (88.0, 88.0)
    table1 = hand_table({1: 90.0, 2: 80.0}, subgraphs=1)
    assert em.extract_features(StitchMap(1, (2,)), table1).values == (80.0,)


def noise_free_world():
    params = quiet_params(
        base_accuracy=90.0,
        precision_acc_penalty={"FP32": 0.0, "FP16": 2.5, "INT8": 6.0},
    )
    zoo = two_variant_zoo()
    table = pf.generate_synthetic(zoo, pf.default_processors(), params, seed=0)
    return zoo, table


def all_samples(zoo, table):
    task = zoo.task(1)
    return [
        (em.extract_features(m, table), table.stitched_accuracy(m))
        for m in zm.enumerate_stitched(task)
    ]


def test_train_noise_free_rmse(intel_zoo):
    params = quiet_params()
    table = pf.generate_synthetic(intel_zoo, pf.default_processors(), params, seed=0)
    samples = em.sample_training_set(intel_zoo.task(1), table, 50, seed=0)
    model = em.train_accuracy_estimator(samples, seed=0)
    errs = [(model.predict(f) - a) ** 2 for f, a in samples]
    assert math.sqrt(sum(errs) / len(errs)) <= 0.5
    # the mean baseline is exact here
    baseline = em.MeanAccuracyBaseline(3)
    assert all(baseline.predict(f) == pytest.approx(a, abs=1e-9) for f, a in samples)


def test_train_single_sample_interpolates():
    feat = em.AccuracyFeature((90.0, 90.0, 84.0))
    model = em.train_accuracy_estimator([(feat, 88.0)], seed=0)
    assert model.predict(feat) == pytest.approx(88.0, abs=1e-6)


def test_train_rejects_empty_and_warns_on_degenerate():
    with pytest.raises(em.EstimatorError):
        em.train_accuracy_estimator([])
    feat = em.AccuracyFeature((90.0, 90.0))
    with pytest.warns(UserWarning):
        em.train_accuracy_estimator([(feat, 90.0), (feat, 89.0)], seed=0)


def test_train_deterministic():
    zoo, table = noise_free_world()
    samples = all_samples(zoo, table)
    a = em.train_accuracy_estimator(samples, seed=3)
    b = em.train_accuracy_estimator(samples, seed=3)
    probe = em.AccuracyFeature((90.0, 84.0, 90.0))
    assert a.predict(probe) == b.predict(probe)


def test_predict_noise_free_mixture():
    zoo, table = noise_free_world()
    model = em.train_accuracy_estimator(all_samples(zoo, table), seed=0)
    assert model.predict(em.AccuracyFeature((90.0, 90.0, 84.0))) == pytest.approx(
        88.0, abs=0.5
    )


def test_predict_dimension_mismatch():
    zoo, table = noise_free_world()
    model = em.train_accuracy_estimator(all_samples(zoo, table), seed=0)
    with pytest.raises(em.EstimatorError):
        model.predict(em.AccuracyFeature((90.0, 84.0)))


def test_constant_donor_fidelity(intel_zoo):
    params = quiet_params()
    table = pf.generate_synthetic(intel_zoo, pf.default_processors(), params, seed=0)
    task = intel_zoo.task(1)
    samples = em.sample_training_set(task, table, 50, seed=0)
    model = em.train_accuracy_estimator(samples, seed=0)
    for i in (1, 2, 10):
        feat = em.extract_features(StitchMap(1, (i, i, i)), table)
        truth = table.accuracy_of(1, i)
        assert abs(model.predict(feat) - truth) <= 1.0


def test_estimate_latency_examples():
    zoo = make_dense_zoo(1, 1, 3)
    lat = {(1, 1, 1, 1): 5.0, (1, 1, 2, 2): 3.0, (1, 1, 3, 3): 4.0}
    lat.update({(1, 1, j, p): 99.0 for j in (1, 2, 3) for p in (1, 2, 3) if (1, 1, j, p) not in lat})
    table = make_table(zoo, lat, {(1, 1): 90.0})
    stitch = StitchMap(1, (1, 1, 1))
    assert em.estimate_latency(stitch, (1, 2, 3), table) == 12.0

    zoo1 = make_dense_zoo(1, 1, 1)
    table1 = make_table(zoo1, fill_latency(zoo1, 7.5), {(1, 1): 90.0})
    assert em.estimate_latency(StitchMap(1, (1,)), (2,), table1) == 7.5

    table_comm = make_table(zoo, lat, {(1, 1): 90.0}, comm_ms=0.2)
    assert em.estimate_latency(stitch, (1, 2, 3), table_comm) == pytest.approx(12.4)


@pytest.mark.parametrize(
    "t,v,s,p,stitching,estimators,expected",
    [
        (4, 10, 3, 3, True, False, 28000),
        (4, 10, 3, 3, True, True, 400),
        (4, 10, 3, 3, False, False, 280),
        (4, 10, 3, 3, False, True, 400),
    ],
)
def test_profiling_cost_values(t, v, s, p, stitching, estimators, expected):
    assert em.profiling_cost(t, v, s, p, stitching, estimators) == expected


def test_profiling_cost_rejects_nonpositive():
    with pytest.raises(em.EstimatorError):
        em.profiling_cost(0, 1, 1, 1, True, True)


@given(
    t=st.integers(1, 5),
    v=st.integers(2, 6),
    s=st.integers(2, 5),
    p=st.integers(2, 4),
)
@settings(max_examples=60)
def test_estimator_cost_beats_exhaustive_stitching(t, v, s, p):
    with_est = em.profiling_cost(t, v, s, p, True, True)
    exhaustive = em.profiling_cost(t, v, s, p, True, False)
    assert with_est < exhaustive


def test_top_k_recall_perfect_predictor():
    zoo, table = noise_free_world()
    candidates = zm.enumerate_stitched(zoo.task(1))
    baseline = em.MeanAccuracyBaseline(3)  # exact in the noise-free world
    assert em.top_k_recall(baseline, candidates, table, 3) == 1.0


def test_top_k_recall_full_k_is_one():
    zoo, table = noise_free_world()
    candidates = zm.enumerate_stitched(zoo.task(1))

    class Constant:
        def predict(self, feature):
            return 50.0

    assert em.top_k_recall(Constant(), candidates, table, len(candidates)) == 1.0


def test_top_k_recall_constant_predictor_oracle():
    # 20 candidates with strictly decreasing truth by donor index
    zoo = make_dense_zoo(1, 20, 1)
    latency = fill_latency(zoo, 1.0)
    accs = {(1, i): 95.0 - i for i in range(1, 21)}
    table = make_table(zoo, latency, accs)
    candidates = zm.enumerate_stitched(zoo.task(1))
    k = 5

    class Constant:
        def predict(self, feature):
            return 10.0

    # oracle by explicit set intersection under the documented tie-break
    true_top = {
        m.donors
        for m in sorted(candidates, key=lambda m: (-table.stitched_accuracy(m), m.donors))[:k]
    }
    pred_top = {m.donors for m in sorted(candidates, key=lambda m: m.donors)[:k]}
    expected = len(true_top & pred_top) / k
    assert em.top_k_recall(Constant(), candidates, table, k) == expected
    # truth decreases with donor index, so lexicographic-first equals true top
    assert expected == 1.0


def test_top_k_recall_rejects_bad_k():
    zoo, table = noise_free_world()
    candidates = zm.enumerate_stitched(zoo.task(1))
    baseline = em.MeanAccuracyBaseline(3)
    with pytest.raises(em.EstimatorError):
        em.top_k_recall(baseline, candidates, table, 0)
    with pytest.raises(em.EstimatorError):
        em.top_k_recall(baseline, candidates, table, len(candidates) + 1)


def test_latency_error_examples():
    assert em.latency_error([10.0, 20.0], [10.0, 20.0]) == (0.0, 0.0)
    mae, mape = em.latency_error([11.0, 18.0], [10.0, 20.0])
    assert mae == pytest.approx(1.5)
    assert mape == pytest.approx(0.10)
    assert em.latency_error([9.0], [10.0]) == (1.0, pytest.approx(0.10))


def test_latency_error_rejects_bad_inputs():
    with pytest.raises(em.EstimatorError):
        em.latency_error([1.0], [1.0, 2.0])
    with pytest.raises(em.EstimatorError):
        em.latency_error([], [])
    with pytest.raises(em.EstimatorError):
        em.latency_error([1.0], [0.0])


def test_feature_validation():
    with pytest.raises(em.EstimatorError):
        em.AccuracyFeature(())
    with pytest.raises(em.EstimatorError):
        em.AccuracyFeature((101.0,))


def test_predict_constant_accuracy_zoo():
    # every variant identical: the predictor must return that accuracy
    zoo = make_dense_zoo(1, 3, 3)
    latency = fill_latency(zoo, 1.0)
    table = make_table(zoo, latency, {(1, i): 87.0 for i in (1, 2, 3)})
    task = zoo.task(1)
    samples = [
        (em.extract_features(m, table), table.stitched_accuracy(m))
        for m in zm.enumerate_stitched(task)[:10]
    ]
    with pytest.warns(UserWarning):  # all features identical by construction
        model = em.train_accuracy_estimator(samples, seed=0)
    assert model.predict(em.AccuracyFeature((87.0, 87.0, 87.0))) == pytest.approx(
        87.0, abs=0.5
    )


def test_top_k_recall_monotone_transform_is_one():
    zoo, table = noise_free_world()
    candidates = zm.enumerate_stitched(zoo.task(1))

    class Shifted:
        # strictly monotone transform of the (noise-free) ground truth
        def predict(self, feature):
            return sum(feature.values) / len(feature.values) / 2.0 + 10.0

    assert em.top_k_recall(Shifted(), candidates, table, 4) == 1.0
