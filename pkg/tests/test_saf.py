import struct

import numpy as np
import pytest

from subalign._xxh import xxh64
from subalign.data import DomainDataset
from subalign.errors import (
    BadMagicError,
    ChecksumError,
    FormatError,
    ShapeOverflowError,
    TruncatedFileError,
    VersionMismatchError,
)
from subalign.numerics import make_rng
from subalign.saf import (
    read_checkpoint,
    read_features,
    validate_features_file,
    write_checkpoint,
    write_features,
)


def test_xxh64_published_vectors():
    assert xxh64(b"") == 0xEF46DB3751D8E999
    assert xxh64(b"a") == 0xD24EC4F1A98C6E5B
    assert xxh64(b"abc") == 0x44BC2CF5AD770999
    # > 32 bytes exercises the striped accumulator path
    assert xxh64(b"The quick brown fox jumps over the lazy dog") == 0x0B242D361FDA71BC
    assert xxh64(b"The quick brown fox jumps over the lazy dog.") == 0x44AD33705751AD73


def _dataset(labeled=True):
    rng = make_rng(17)
    features = rng.standard_normal((10, 4)).astype(np.float32).astype(np.float64)
    labels = rng.integers(0, 3, size=10) if labeled else None
    return DomainDataset(features=features, labels=labels, domain_tag="d",
                         class_count=3 if labeled else 0)


def test_feature_roundtrip_bitwise(tmp_path):
    ds = _dataset()
    path = tmp_path / "d.saf"
    write_features(path, ds)
    loaded = read_features(path)
    assert np.array_equal(loaded.features, ds.features)
    assert np.array_equal(loaded.labels, ds.labels)
    assert loaded.class_count == 3
    assert loaded.domain_tag == "d"
    # writing the loaded dataset again produces identical bytes
    path2 = tmp_path / "d2.saf"
    write_features(path2, loaded)
    assert path.read_bytes() == path2.read_bytes()


def test_feature_roundtrip_unlabeled(tmp_path):
    ds = _dataset(labeled=False)
    path = tmp_path / "u.saf"
    write_features(path, ds)
    loaded = read_features(path)
    assert loaded.labels is None
    assert np.array_equal(loaded.features, ds.features)


def test_validate_features_file(tmp_path):
    path = tmp_path / "d.saf"
    write_features(path, _dataset())
    info = validate_features_file(path)
    assert info == {"rows": 10, "cols": 4, "has_labels": True, "class_count": 3}


def test_wrong_magic(tmp_path):
    path = tmp_path / "bad.saf"
    write_features(path, _dataset())
    blob = bytearray(path.read_bytes())
    blob[:4] = b"NOPE"
    path.write_bytes(bytes(blob))
    with pytest.raises(BadMagicError):
        read_features(path)


def test_version_mismatch(tmp_path):
    path = tmp_path / "v.saf"
    write_features(path, _dataset())
    blob = bytearray(path.read_bytes())
    blob[4:8] = struct.pack("<I", 9)
    path.write_bytes(bytes(blob))
    with pytest.raises(VersionMismatchError):
        read_features(path)


def test_truncation(tmp_path):
    path = tmp_path / "t.saf"
    write_features(path, _dataset())
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(TruncatedFileError):
        read_features(path)


def test_shape_overflow(tmp_path):
    path = tmp_path / "o.saf"
    write_features(path, _dataset())
    blob = bytearray(path.read_bytes())
    blob[8:16] = struct.pack("<Q", 1 << 60)  # absurd row count
    path.write_bytes(bytes(blob))
    with pytest.raises(ShapeOverflowError):
        read_features(path)


def test_checksum_corruption(tmp_path):
    path = tmp_path / "c.saf"
    write_features(path, _dataset())
    blob = bytearray(path.read_bytes())
    blob[30] ^= 0xFF  # flip a payload byte
    path.write_bytes(bytes(blob))
    with pytest.raises(ChecksumError):
        read_features(path)


def test_trailing_garbage(tmp_path):
    path = tmp_path / "g.saf"
    write_features(path, _dataset())
    path.write_bytes(path.read_bytes() + b"extra")
    with pytest.raises(FormatError):
        read_features(path)


def test_refuses_nonfinite_features(tmp_path):
    ds = _dataset(labeled=False)
    ds.features[0, 0] = np.inf
    with pytest.raises(Exception):
        write_features(tmp_path / "x.saf", ds)


def test_no_partial_file_on_failure(tmp_path):
    ds = _dataset(labeled=False)
    ds.features[0, 0] = np.nan
    target = tmp_path / "never.saf"
    with pytest.raises(Exception):
        write_features(target, ds)
    assert not target.exists()
    assert list(tmp_path.iterdir()) == []


def test_checkpoint_roundtrip(tmp_path):
    rng = make_rng(19)
    meta = {"kind": "test", "note": "hello", "value": 3}
    arrays = {
        "a": rng.standard_normal((3, 4)),
        "b": rng.standard_normal(5),
        "scalarish": np.array([[2.5]]),
    }
    path = tmp_path / "x.ckpt"
    write_checkpoint(path, meta, arrays)
    loaded_meta, loaded = read_checkpoint(path)
    assert loaded_meta == meta
    for name in arrays:
        assert np.array_equal(loaded[name], arrays[name])


def test_checkpoint_distinct_magic(tmp_path):
    path = tmp_path / "x.ckpt"
    write_checkpoint(path, {"kind": "test"}, {"a": np.zeros(2)})
    assert path.read_bytes()[:4] == b"SAC1"
    with pytest.raises(BadMagicError):
        read_features(path)


def test_checkpoint_nan_policy(tmp_path):
    path = tmp_path / "n.ckpt"
    with pytest.raises(Exception):
        write_checkpoint(path, {}, {"bad": np.array([np.nan])})
    write_checkpoint(path, {}, {"trace": np.array([np.nan])}, nan_ok=("trace",))
    _, arrays = read_checkpoint(path)
    assert np.isnan(arrays["trace"][0])
