from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stitchsim import zoo as zm
from tests.conftest import make_dense_zoo


def test_enumerate_count_v10_s3():
    task = zm.Task(1, "t", 10, 3)
    assert len(zm.enumerate_stitched(task)) == 1000


def test_enumerate_single_variant_is_identity():
    task = zm.Task(1, "t", 1, 4)
    maps = zm.enumerate_stitched(task)
    assert maps == [zm.StitchMap(1, (1, 1, 1, 1))]


def test_enumerate_lexicographic_order():
    task = zm.Task(1, "t", 3, 2)
    donors = [m.donors for m in zm.enumerate_stitched(task)]
    assert donors == [
        (1, 1), (1, 2), (1, 3),
        (2, 1), (2, 2), (2, 3),
        (3, 1), (3, 2), (3, 3),
    ]


def test_enumerate_deterministic():
    task = zm.Task(2, "t", 4, 3)
    assert zm.enumerate_stitched(task) == zm.enumerate_stitched(task)


def test_resolve_substitutes_positionwise():
    zoo = make_dense_zoo(1, 3, 3)
    variants = zoo.variants_of(1)
    got = zm.resolve_subgraphs(zm.StitchMap(1, (2, 1, 2)), variants)
    assert [(s.variant_index, s.position) for s in got] == [(2, 1), (1, 2), (2, 3)]


def test_resolve_identity():
    zoo = make_dense_zoo(1, 3, 3)
    variants = zoo.variants_of(1)
    got = zm.resolve_subgraphs(zm.StitchMap(1, (1, 1, 1)), variants)
    assert got == list(variants[0].subgraphs)


def test_resolve_missing_variant():
    zoo = make_dense_zoo(1, 3, 2)
    with pytest.raises(zm.MissingVariantError):
        zm.resolve_subgraphs(zm.StitchMap(1, (4, 1)), zoo.variants_of(1))


@pytest.mark.parametrize(
    "t,v,s,expected",
    [(4, 10, 3, 4000), (1, 1, 1, 1), (2, 5, 4, 1250)],
)
def test_stitched_variant_count(t, v, s, expected):
    assert zm.stitched_variant_count(t, v, s) == expected


def test_stitched_variant_count_rejects_nonpositive():
    with pytest.raises(zm.ZooError):
        zm.stitched_variant_count(0, 1, 1)


def test_stitched_variant_count_huge_is_exact():
    # arbitrary-precision: no wraparound however large
    assert zm.stitched_variant_count(3, 100, 10) == 3 * 100**10


@given(v=st.integers(1, 4), s=st.integers(1, 4))
@settings(max_examples=30)
def test_enumeration_properties(v, s):
    task = zm.Task(1, "t", v, s)
    maps = zm.enumerate_stitched(task)
    assert len(maps) == v**s
    assert len({m.donors for m in maps}) == len(maps)
    zoo = make_dense_zoo(1, v, s)
    variants = zoo.variants_of(1)
    for m in maps:
        resolved = zm.resolve_subgraphs(m, variants)
        assert [sub.position for sub in resolved] == list(range(1, s + 1))


def test_closure_constant_maps_reproduce_zoo():
    zoo = make_dense_zoo(1, 3, 2)
    variants = zoo.variants_of(1)
    constant = [m for m in zm.enumerate_stitched(zoo.task(1)) if m.is_constant()]
    assert len(constant) == 3
    resolved = {tuple(s.key() for s in zm.resolve_subgraphs(m, variants)) for m in constant}
    originals = {tuple(s.key() for s in v.subgraphs) for v in variants}
    assert resolved == originals


def test_template_intel_shape(intel_zoo):
    assert len(intel_zoo.tasks) == 4
    for task in intel_zoo.tasks:
        variants = intel_zoo.variants_of(task.task_id)
        assert len(variants) == 10
        assert all(len(v.subgraphs) == 3 for v in variants)
        kinds = [v.sparsity_kind for v in variants]
        assert kinds.count("dense") == 1
        assert kinds.count("quantized") == 1
        assert kinds.count("unstructured_pruned") == 6
        assert kinds.count("structured_pruned") == 2


def test_template_jetson_shape():
    zoo = zm.template_zoo("jetson", 4, 3)
    for task in zoo.tasks:
        kinds = [v.sparsity_kind for v in zoo.variants_of(task.task_id)]
        assert kinds.count("quantized") == 2
        assert kinds.count("structured_pruned") == 7


def test_template_memory_scales_with_sparsity(intel_zoo):
    dense = intel_zoo.variant(1, 1)
    pruned90 = intel_zoo.variant(1, 3)
    assert pruned90.sparsity_level == 0.90
    ratio = pruned90.subgraphs[0].mem_bytes / dense.subgraphs[0].mem_bytes
    assert ratio == pytest.approx(0.10, abs=1e-6)


def test_zoo_json_roundtrip(tmp_path, intel_zoo):
    path = tmp_path / "zoo.json"
    zm.save_zoo(intel_zoo, path)
    loaded = zm.load_zoo(path)
    assert zm.zoo_to_dict(loaded) == zm.zoo_to_dict(intel_zoo)


def test_zoo_validation_rejects_bad_structures():
    with pytest.raises(zm.ZooError):
        zm.Task(1, "t", 0, 3)
    subs = (zm.Subgraph(1, 1, 2, 5),)  # position must start at 1
    with pytest.raises(zm.ZooError):
        zm.SparseVariant(1, 1, "dense", 0.0, "FP32", subs)
    with pytest.raises(zm.ZooError):
        zm.SparseVariant(1, 1, "dense", 0.0, "FP4", ())
    good = zm.SparseVariant(1, 1, "dense", 0.0, "FP32", (zm.Subgraph(1, 1, 1, 5),))
    with pytest.raises(zm.ZooError):
        zm.Zoo([zm.Task(1, "t", 2, 1)], [good])  # missing variant 2


def test_template_custom_variant_count():
    zoo = zm.template_zoo("custom", 2, 3, variants_per_task=13)
    for task in zoo.tasks:
        assert task.variant_count == 13
        assert len(zoo.variants_of(task.task_id)) == 13
    with pytest.raises(zm.ZooError):
        zm.template_zoo("weird", 2, 3)
