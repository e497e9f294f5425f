"""Pure-Python XXH64 (64-bit xxHash), used as the trailing file checksum.

Implemented from the published algorithm so the on-disk formats stay
dependency-free and reproducible from any language.
"""

from __future__ import annotations

import struct

_PRIME1 = 0x9E3779B185EBCA87
_PRIME2 = 0xC2B2AE3D27D4EB4F
_PRIME3 = 0x165667B19E3779F9
_PRIME4 = 0x85EBCA77C2B2AE63
_PRIME5 = 0x27D4EB2F165667C5
_MASK = (1 << 64) - 1


def _rotl(x: int, r: int) -> int:
    return ((x << r) | (x >> (64 - r))) & _MASK


def _round(acc: int, lane: int) -> int:
    acc = (acc + lane * _PRIME2) & _MASK
    return (_rotl(acc, 31) * _PRIME1) & _MASK


def _merge(acc: int, val: int) -> int:
    acc ^= _round(0, val)
    return (acc * _PRIME1 + _PRIME4) & _MASK


def xxh64(data: bytes, seed: int = 0) -> int:
    """XXH64 digest of `data` as an unsigned 64-bit integer."""
    n = len(data)
    i = 0
    if n >= 32:
        v1 = (seed + _PRIME1 + _PRIME2) & _MASK
        v2 = (seed + _PRIME2) & _MASK
        v3 = seed & _MASK
        v4 = (seed - _PRIME1) & _MASK
        stop = n - 32
        while i <= stop:
            lanes = struct.unpack_from("<4Q", data, i)
            v1 = _round(v1, lanes[0])
            v2 = _round(v2, lanes[1])
            v3 = _round(v3, lanes[2])
            v4 = _round(v4, lanes[3])
            i += 32
        h = (_rotl(v1, 1) + _rotl(v2, 7) + _rotl(v3, 12) + _rotl(v4, 18)) & _MASK
        h = _merge(h, v1)
        h = _merge(h, v2)
        h = _merge(h, v3)
        h = _merge(h, v4)
    else:
        h = (seed + _PRIME5) & _MASK
    h = (h + n) & _MASK
    while i + 8 <= n:
        (lane,) = struct.unpack_from("<Q", data, i)
        h ^= _round(0, lane)
        h = (_rotl(h, 27) * _PRIME1 + _PRIME4) & _MASK
        i += 8
    if i + 4 <= n:
        (lane32,) = struct.unpack_from("<I", data, i)
        h ^= (lane32 * _PRIME1) & _MASK
        h = (_rotl(h, 23) * _PRIME2 + _PRIME3) & _MASK
        i += 4
    while i < n:
        h ^= (data[i] * _PRIME5) & _MASK
        h = (_rotl(h, 11) * _PRIME1) & _MASK
        i += 1
    h ^= h >> 33
    h = (h * _PRIME2) & _MASK
    h ^= h >> 29
    h = (h * _PRIME3) & _MASK
    h ^= h >> 32
    return h
