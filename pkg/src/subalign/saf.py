"""Binary on-disk formats: SAF1 feature files and SAC1 checkpoints.

SAF1 layout (all little-endian)::

    magic   4 bytes  "SAF1"
    version u32      = 1
    n       u64      row count
    D       u64      column count
    labels  u8       1 if a label block follows the features
    K       u32      class count (0 when unknown)
    data    n*D float32, row-major
    labels  n int32 (only when the label flag is set)
    check   u64      XXH64 (seed 0) of every preceding byte

SAC1 checkpoints share the header discipline with magic "SAC1": a
canonical-JSON metadata block followed by named float64 arrays with shape
headers, then the same trailing checksum. Writers always go through a
temporary file and an atomic rename, so a failed command never leaves a
partial artifact behind.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from ._xxh import xxh64
from .errors import (
    BadMagicError,
    ChecksumError,
    FormatError,
    ParameterError,
    ShapeOverflowError,
    TruncatedFileError,
    VersionMismatchError,
)

MAGIC_FEATURES = b"SAF1"
MAGIC_CHECKPOINT = b"SAC1"
FORMAT_VERSION = 1

# Declared payloads beyond this many bytes are treated as corrupt headers
# rather than honest files.
_MAX_PAYLOAD_BYTES = 1 << 40


def atomic_write_bytes(path, payload: bytes):
    """Write `payload` to `path` via a same-directory temp file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.path = path
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.blob):
            raise TruncatedFileError(
                f"{self.path}: expected {count} more bytes at offset {self.pos}, "
                f"file has {len(self.blob)}"
            )
        out = self.blob[self.pos : self.pos + count]
        self.pos += count
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _check_trailer(reader: _Reader, path: str):
    body = reader.blob[: len(reader.blob) - 8]
    if reader.pos != len(body):
        raise FormatError(
            f"{path}: {len(body) - reader.pos} unexpected trailing bytes before checksum"
        )
    (stored,) = struct.unpack("<Q", reader.blob[-8:])
    actual = xxh64(body)
    if stored != actual:
        raise ChecksumError(
            f"{path}: checksum mismatch (stored {stored:#018x}, computed {actual:#018x})"
        )


def _open_blob(path, magic: bytes) -> _Reader:
    path = os.fspath(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    reader = _Reader(blob, path)
    got = reader.take(4)
    if got != magic:
        raise BadMagicError(
            f"{path}: bad magic {got!r} (expected {magic.decode()!r})"
        )
    (version,) = reader.unpack("<I")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: unsupported format version {version} (expected {FORMAT_VERSION})"
        )
    if len(blob) < 16:
        raise TruncatedFileError(f"{path}: too short to hold a checksum")
    return reader


def write_features(path, dataset):
    """Serialise a DomainDataset to a SAF1 file (features stored as float32)."""
    features = np.ascontiguousarray(dataset.features, dtype=np.float64)
    if not np.isfinite(features).all():
        raise ParameterError("refusing to write non-finite features")
    n, dim = features.shape
    has_labels = dataset.labels is not None
    parts = [
        MAGIC_FEATURES,
        struct.pack("<I", FORMAT_VERSION),
        struct.pack("<Q", n),
        struct.pack("<Q", dim),
        struct.pack("<B", 1 if has_labels else 0),
        struct.pack("<I", int(dataset.class_count)),
        features.astype("<f4").tobytes(),
    ]
    if has_labels:
        parts.append(np.ascontiguousarray(dataset.labels, dtype="<i4").tobytes())
    body = b"".join(parts)
    atomic_write_bytes(path, body + struct.pack("<Q", xxh64(body)))


def read_features(path, domain_tag: str | None = None):
    """Read a SAF1 file back into a DomainDataset (features widened to float64)."""
    from .data import DomainDataset

    reader = _open_blob(path, MAGIC_FEATURES)
    n, dim = reader.unpack("<QQ")
    (has_labels,) = reader.unpack("<B")
    (class_count,) = reader.unpack("<I")
    if n * dim * 4 > _MAX_PAYLOAD_BYTES or dim == 0:
        raise ShapeOverflowError(
            f"{os.fspath(path)}: implausible declared shape {n} x {dim}"
        )
    data = np.frombuffer(reader.take(int(n * dim) * 4), dtype="<f4")
    features = data.astype(np.float64).reshape(int(n), int(dim))
    labels = None
    if has_labels:
        labels = np.frombuffer(reader.take(int(n) * 4), dtype="<i4").astype(np.int64)
    _check_trailer(reader, os.fspath(path))
    if domain_tag is None:
        domain_tag = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return DomainDataset(
        features=features,
        labels=labels,
        domain_tag=domain_tag,
        class_count=int(class_count),
    )


def validate_features_file(path) -> dict:
    """Full-format validation; returns the header fields on success."""
    ds = read_features(path)
    return {
        "rows": ds.features.shape[0],
        "cols": ds.features.shape[1],
        "has_labels": ds.labels is not None,
        "class_count": ds.class_count,
    }


def write_checkpoint(path, meta: dict, arrays: dict, nan_ok=()):
    """Serialise named float64 arrays plus a JSON metadata block.

    Arrays must be finite except those named in `nan_ok` (e.g. trace columns
    where NaN means "not measured").
    """
    meta_blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [
        MAGIC_CHECKPOINT,
        struct.pack("<I", FORMAT_VERSION),
        struct.pack("<I", len(meta_blob)),
        meta_blob,
        struct.pack("<I", len(arrays)),
    ]
    for name in sorted(arrays):
        arr = np.ascontiguousarray(np.asarray(arrays[name], dtype=np.float64))
        if name not in nan_ok and not np.isfinite(arr).all():
            raise ParameterError(f"refusing to write non-finite array {name!r}")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", arr.ndim))
        for d in arr.shape:
            parts.append(struct.pack("<Q", d))
        parts.append(arr.astype("<f8").tobytes())
    body = b"".join(parts)
    atomic_write_bytes(path, body + struct.pack("<Q", xxh64(body)))


def read_checkpoint(path):
    """Read a SAC1 checkpoint; returns (meta, arrays)."""
    reader = _open_blob(path, MAGIC_CHECKPOINT)
    (meta_len,) = reader.unpack("<I")
    try:
        meta = json.loads(reader.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{os.fspath(path)}: corrupt metadata block: {exc}") from exc
    (count,) = reader.unpack("<I")
    arrays = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        shape = tuple(reader.unpack("<Q")[0] for _ in range(ndim))
        total = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if total * 8 > _MAX_PAYLOAD_BYTES:
            raise ShapeOverflowError(
                f"{os.fspath(path)}: implausible array shape {shape} for {name!r}"
            )
        data = np.frombuffer(reader.take(total * 8), dtype="<f8")
        arrays[name] = data.astype(np.float64).reshape(shape)
    _check_trailer(reader, os.fspath(path))
    return meta, arrays
