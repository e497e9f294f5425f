import numpy as np
import pytest

import subalign as sa
from subalign.data import (
    DomainDataset,
    SyntheticSpec,
    accuracy,
    generate_synthetic,
    per_class_accuracy,
    read_features_csv,
    restrict_classes,
    split,
    split_indices,
    subsample,
)
from subalign.errors import DimensionMismatchError, ParameterError
from subalign.numerics import make_rng


def test_spec_validation():
    with pytest.raises(ParameterError):
        SyntheticSpec(classes=1)
    with pytest.raises(ParameterError):
        SyntheticSpec(intrinsic_dim=30, ambient_dim=50)  # needs 2k <= D
    with pytest.raises(ParameterError):
        SyntheticSpec(thetas=(45.0,), translations=(1.0, 2.0))
    with pytest.raises(ParameterError):
        SyntheticSpec(thetas=(190.0,), translations=(1.0,), scalings=(1.0,))
    with pytest.raises(ParameterError):
        SyntheticSpec(sigma=-0.1)


def test_generate_is_pure_function_of_spec():
    spec = SyntheticSpec(per_class=20)
    s1, t1 = generate_synthetic(spec)
    s2, t2 = generate_synthetic(spec)
    assert np.array_equal(s1.features, s2.features)
    assert np.array_equal(s1.labels, s2.labels)
    for a, b in zip(t1, t2):
        assert np.array_equal(a.features, b.features)


def test_null_shift_matches_source_distribution():
    spec = SyntheticSpec(
        classes=4, ambient_dim=16, intrinsic_dim=4, per_class=400,
        thetas=(0.0,), translations=(0.0,), scalings=(1.0,), sigma=0.5, seed=1,
    )
    source, (twin,) = generate_synthetic(spec)
    for c in range(4):
        mu_s = source.features[source.labels == c].mean(axis=0)
        mu_t = twin.features[twin.labels == c].mean(axis=0)
        bound = 3.0 * spec.sigma / np.sqrt(spec.per_class)
        # difference of two empirical means: allow twice the single-mean bound
        assert np.abs(mu_s - mu_t).max() <= 2.0 * bound


def test_rotation_moves_class_means_exactly():
    spec = SyntheticSpec(
        classes=3, ambient_dim=12, intrinsic_dim=3, per_class=2000,
        thetas=(45.0,), translations=(0.0,), scalings=(1.0,), sigma=0.0, seed=2,
    )
    source, (target,) = generate_synthetic(spec)
    # sigma=0: every sample sits exactly on its class mean
    for c in range(3):
        src_mean = source.features[source.labels == c][0]
        tgt_mean = target.features[target.labels == c][0]
        assert np.linalg.norm(src_mean) == pytest.approx(np.linalg.norm(tgt_mean), rel=1e-12)
        cos = src_mean @ tgt_mean / (np.linalg.norm(src_mean) * np.linalg.norm(tgt_mean))
        assert cos == pytest.approx(np.cos(np.deg2rad(45.0)), abs=1e-9)


def test_generated_benchmark_is_linearly_adaptable(benchmark):
    source, target_a, _ = benchmark
    none = sa.adapt(source.features, source.labels, target_a.features,
                    sa.AdaptConfig(mode="none", seed=0))
    independent = sa.adapt(source.features, source.labels, target_a.features,
                           sa.AdaptConfig(mode="independent", seed=0))
    acc_none = accuracy(none.predict(target_a.features)[0], target_a.labels)
    acc_ind = accuracy(independent.predict(target_a.features)[0], target_a.labels)
    assert acc_ind - acc_none >= 0.05


def test_split_sizes_and_determinism():
    a, b = split_indices(10, 0.8, make_rng(5))
    assert len(a) == 8 and len(b) == 2
    a2, b2 = split_indices(10, 0.8, make_rng(5))
    assert np.array_equal(a, a2) and np.array_equal(b, b2)


def test_split_disjoint_exhaustive_over_seeds():
    for seed in range(100):
        n = 17 + (seed % 13)
        a, b = split_indices(n, 0.7, make_rng(seed))
        merged = np.sort(np.concatenate([a, b]))
        assert np.array_equal(merged, np.arange(n))
        assert len(np.intersect1d(a, b)) == 0


def test_split_validation():
    with pytest.raises(ParameterError):
        split_indices(10, 0.0, make_rng(0))
    with pytest.raises(ParameterError):
        split_indices(1, 0.5, make_rng(0))


def test_split_dataset_carries_fields():
    ds = DomainDataset(
        features=np.arange(20.0).reshape(10, 2),
        labels=np.arange(10) % 3,
        domain_tag="d",
        class_count=3,
    )
    part_a, part_b = split(ds, 0.8, make_rng(0))
    assert part_a.n == 8 and part_b.n == 2
    assert part_a.class_count == 3 and part_b.domain_tag == "d"
    assert part_a.labels is not None


def test_subsample_and_restrict():
    ds = DomainDataset(
        features=np.arange(40.0).reshape(20, 2),
        labels=np.arange(20) % 4,
        domain_tag="d",
    )
    half = subsample(ds, 0.5, make_rng(1))
    assert half.n == 10
    only = restrict_classes(ds, [0, 2])
    assert set(only.labels.tolist()) == {0, 2}
    with pytest.raises(ParameterError):
        restrict_classes(ds, [9])


def test_accuracy_examples():
    assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0
    assert accuracy([0, 0], [1, 1]) == 0.0
    assert accuracy([0, 1, 1, 0], [0, 1, 0, 0]) == 0.75
    with pytest.raises(DimensionMismatchError):
        accuracy([1], [1, 2])


def test_per_class_accuracy():
    out = per_class_accuracy([0, 1, 1, 0], [0, 1, 0, 0], 3)
    np.testing.assert_allclose(out[:2], [2.0 / 3.0, 1.0])
    assert np.isnan(out[2])


def test_csv_reader(tmp_path):
    path = tmp_path / "tiny.csv"
    path.write_text("f0,f1,label\n1.0,2.0,0\n3.0,4.0,1\n")
    ds = read_features_csv(path)
    np.testing.assert_allclose(ds.features, [[1.0, 2.0], [3.0, 4.0]])
    assert ds.labels.tolist() == [0, 1]

    unlabeled = tmp_path / "plain.csv"
    unlabeled.write_text("a,b\n5,6\n")
    ds2 = read_features_csv(unlabeled)
    assert ds2.labels is None
    np.testing.assert_allclose(ds2.features, [[5.0, 6.0]])

    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,notanumber\n")
    with pytest.raises(ParameterError):
        read_features_csv(bad)


def test_dataset_validation():
    with pytest.raises(ParameterError):
        DomainDataset(features=np.zeros((3, 2)), labels=np.array([0, 1, 5]),
                      class_count=3)
    with pytest.raises(DimensionMismatchError):
        DomainDataset(features=np.zeros((3, 2)), labels=np.array([0, 1]))
