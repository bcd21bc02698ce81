from __future__ import annotations

import numpy as np
import pytest

from uapkit.data import (
    BINARY,
    CONTINUOUS,
    FeatureSpaceSpec,
    FeatureVector,
    LabeledDataset,
    SplitPlan,
    SyntheticDatasetConfig,
    l0_distance,
    largest_remainder_counts,
    load_feature_spec,
    load_sparse_dataset,
    make_split,
    save_feature_spec,
    save_sparse_dataset,
    synthesize_dataset,
    synthetic_feature_spec,
)

from conftest import binary_spec, dataset_from_dense, mixed_spec, vec


# ---------------------------------------------------------------------------
# spec and vector basics


def test_spec_validation():
    with pytest.raises(ValueError):
        FeatureSpaceSpec(0, (), ())
    with pytest.raises(ValueError):
        FeatureSpaceSpec(2, (BINARY,), ("g", "g"))
    with pytest.raises(ValueError):
        FeatureSpaceSpec(2, (BINARY, "bogus"), ("g", "g"))
    with pytest.raises(ValueError):
        FeatureSpaceSpec(1, (BINARY,), ("",))


def test_vector_drops_explicit_zeros_and_validates():
    spec = binary_spec(4)
    x = vec(spec, {0: 1, 2: 0})
    assert x.values == {0: 1.0}
    with pytest.raises(ValueError):
        vec(spec, {9: 1})
    with pytest.raises(ValueError):
        vec(spec, {1: 0.5})  # binary features hold only 0 or 1


def test_vector_dense_round_trip():
    spec = mixed_spec(3, 2)
    x = vec(spec, {0: 1, 3: 0.25})
    d = x.to_dense()
    assert d.tolist() == [1.0, 0.0, 0.0, 0.25, 0.0]
    assert FeatureVector.from_dense(spec, d).values == x.values


# ---------------------------------------------------------------------------
# l0 distance


def test_l0_distance_examples():
    spec = binary_spec(6)
    assert l0_distance(vec(spec, {1: 1}), vec(spec, {1: 1})) == 0
    assert l0_distance(vec(spec, {}), vec(spec, {2: 1, 5: 1})) == 2
    # symmetric difference of {1,2} and {2,3}
    assert l0_distance(vec(spec, {1: 1, 2: 1}), vec(spec, {2: 1, 3: 1})) == 2


def test_l0_distance_spec_mismatch():
    with pytest.raises(ValueError):
        l0_distance(vec(binary_spec(3), {}), vec(binary_spec(4), {}))


def test_l0_distance_is_a_metric():
    spec = binary_spec(8)
    rng = np.random.default_rng(5)
    for _ in range(200):
        a, b, c = (vec(spec, {i: 1 for i in np.nonzero(rng.random(8) < 0.4)[0]})
                   for _ in range(3))
        assert l0_distance(a, b) == l0_distance(b, a)
        assert (l0_distance(a, b) == 0) == (a.values == b.values)
        assert l0_distance(a, c) <= l0_distance(a, b) + l0_distance(b, c)


# ---------------------------------------------------------------------------
# splits


def test_largest_remainder_three_examples():
    # fractions (.6,.2,.2) over 3: floors (1,0,0), remainders (.8,.6,.6),
    # ties resolved toward the earlier split -> (2,1,0)
    assert largest_remainder_counts(3, (0.6, 0.2, 0.2)) == [2, 1, 0]


def test_largest_remainder_properties():
    rng = np.random.default_rng(11)
    for _ in range(300):
        n = int(rng.integers(0, 50))
        raw = rng.random(3) + 1e-3
        fracs = raw / raw.sum()
        counts = largest_remainder_counts(n, fracs)
        assert sum(counts) == n
        for c, f in zip(counts, fracs):
            assert np.floor(n * f - 1e-9) <= c <= np.ceil(n * f + 1e-9)


def test_make_split_stratified_exact():
    spec = binary_spec(2)
    X = np.zeros((10, 2))
    y = [0] * 5 + [1] * 5
    ds = dataset_from_dense(spec, X, y)
    train, expl, test = make_split(ds, SplitPlan(0.6, 0.2, 0.2, seed=7))
    assert (len(train), len(expl), len(test)) == (6, 2, 2)
    for part in (train, expl, test):
        labels, counts = np.unique(part.labels, return_counts=True)
        assert labels.tolist() == [0, 1] and counts[0] == counts[1]


def test_make_split_partition_property():
    spec = binary_spec(3)
    rng = np.random.default_rng(3)
    for seed in range(20):
        n = int(rng.integers(4, 60))
        y = rng.integers(0, 2, n)
        if len(np.unique(y)) < 2:
            continue
        ds = dataset_from_dense(spec, np.zeros((n, 3)), y)
        parts = make_split(ds, SplitPlan(0.5, 0.25, 0.25, seed=seed))
        ids = [i for p in parts for i in p.ids]
        assert len(ids) == n and set(ids) == set(ds.ids)


def test_make_split_deterministic():
    spec = binary_spec(2)
    ds = dataset_from_dense(spec, np.zeros((30, 2)), [0, 1] * 15)
    plan = SplitPlan(0.6, 0.2, 0.2, seed=7)
    a = make_split(ds, plan)
    b = make_split(ds, plan)
    for pa, pb in zip(a, b):
        assert pa.ids == pb.ids


def test_make_split_rejects_single_class_when_stratified():
    spec = binary_spec(2)
    ds = dataset_from_dense(spec, np.zeros((4, 2)), [1, 1, 1, 1])
    with pytest.raises(ValueError):
        make_split(ds, SplitPlan(0.6, 0.2, 0.2, stratified=True))


def test_split_plan_validation():
    with pytest.raises(ValueError):
        SplitPlan(0.5, 0.2, 0.2)
    with pytest.raises(ValueError):
        SplitPlan(1.2, -0.1, -0.1)


# ---------------------------------------------------------------------------
# synthetic generator


def test_synthetic_degenerate_probabilities():
    cfg = SyntheticDatasetConfig(n_features=10, n_benign=20, n_malware=20,
                                 n_goodware_indicative=4, p_on_in_own_class=1.0,
                                 p_on_in_other_class=0.0, p_background=0.0)
    ds = synthesize_dataset(cfg)
    X = ds.dense_matrix()
    benign, malware = X[ds.labels == 0], X[ds.labels == 1]
    assert np.all(benign[:, :4] == 1.0)
    assert np.all(malware[:, :4] == 0.0)


def test_synthetic_activation_frequency():
    cfg = SyntheticDatasetConfig(n_features=50, n_benign=2000, n_malware=2000,
                                 n_goodware_indicative=8, p_on_in_own_class=0.8,
                                 p_on_in_other_class=0.05, seed=13)
    ds = synthesize_dataset(cfg)
    X = ds.dense_matrix()
    freq = X[ds.labels == 0][:, 0].mean()
    assert abs(freq - 0.8) <= 0.03
    freq_mal = X[ds.labels == 1][:, 0].mean()
    assert abs(freq_mal - 0.05) <= 0.03


def test_synthetic_no_malware():
    cfg = SyntheticDatasetConfig(n_features=6, n_benign=5, n_malware=0,
                                 n_goodware_indicative=2)
    ds = synthesize_dataset(cfg)
    assert len(ds) == 5 and np.all(ds.labels == 0)


def test_synthetic_config_validation():
    with pytest.raises(ValueError):
        SyntheticDatasetConfig(n_features=4, n_benign=1, n_malware=1,
                               n_goodware_indicative=3, n_malware_indicative=2)
    with pytest.raises(ValueError):
        SyntheticDatasetConfig(n_features=4, n_benign=1, n_malware=1,
                               n_goodware_indicative=1, p_on_in_own_class=0.1,
                               p_on_in_other_class=0.5)


def test_synthetic_continuous_ranges():
    cfg = SyntheticDatasetConfig(n_features=10, n_benign=100, n_malware=100,
                                 n_goodware_indicative=2, n_continuous=3, seed=2)
    spec = synthetic_feature_spec(cfg)
    assert spec.feature_kinds[2] == CONTINUOUS and spec.feature_kinds[5] == BINARY
    ds = synthesize_dataset(cfg)
    X = ds.dense_matrix()
    cont = X[:, 2:5]
    assert cont.min() >= 0.0 and cont.max() <= 1.0
    # class-conditional ranges overlap but differ in mean
    assert X[ds.labels == 1][:, 2].mean() > X[ds.labels == 0][:, 2].mean()


# ---------------------------------------------------------------------------
# serialization


def test_sparse_round_trip_byte_identical(tmp_path):
    cfg = SyntheticDatasetConfig(n_features=30, n_benign=40, n_malware=40,
                                 n_goodware_indicative=6, n_continuous=4, seed=9)
    ds = synthesize_dataset(cfg)
    p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
    save_sparse_dataset(ds, p1)
    ds2 = load_sparse_dataset(p1, ds.spec)
    save_sparse_dataset(ds2, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert np.array_equal(ds.labels, ds2.labels)
    assert all(a.values == b.values for a, b in zip(ds.examples, ds2.examples))


def test_sparse_load_examples(tmp_path):
    spec = binary_spec(20)
    p = tmp_path / "d.txt"
    p.write_text("# comment\n1 3:1 17:1\n0\n", encoding="utf-8")
    ds = load_sparse_dataset(p, spec)
    assert ds.labels.tolist() == [1, 0]
    assert ds.examples[0].values == {3: 1.0, 17: 1.0}
    assert ds.examples[1].values == {}


@pytest.mark.parametrize("line,fragment", [
    ("1 3:0.5", "non-binary value"),
    ("1 5:1 3:1", "strictly increasing"),
    ("1 99:1", "out of range"),
    ("2 1:1", "label"),
    ("1 3:", "malformed"),
])
def test_sparse_load_errors_name_line(tmp_path, line, fragment):
    spec = binary_spec(20)
    p = tmp_path / "bad.txt"
    p.write_text("0\n" + line + "\n", encoding="utf-8")
    with pytest.raises(ValueError, match="line 2"):
        load_sparse_dataset(p, spec)
    with pytest.raises(ValueError, match=fragment):
        load_sparse_dataset(p, spec)


def test_feature_spec_sidecar_round_trip(tmp_path):
    spec = mixed_spec(7, 3)
    p = tmp_path / "s.spec"
    save_feature_spec(spec, p)
    spec2 = load_feature_spec(p)
    assert spec2 == spec


def test_dataset_requires_unique_ids():
    spec = binary_spec(2)
    with pytest.raises(ValueError):
        LabeledDataset(spec, [vec(spec, {}), vec(spec, {})],
                       np.array([0, 1]), ["x", "x"])
