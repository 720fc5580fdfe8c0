"""Deterministic seeding: stable 64-bit seed derivation and counter-based uniforms.

Quantizer randomness for element ``j`` under seed ``k`` is a pure function of
``(k, j)``: the SplitMix64 output for counter ``j + 1`` of a stream keyed by
``mix64(k)``.  This makes quantization reproducible and independent of the
order in which elements (or seeds) are processed.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GAMMA = np.uint64(GOLDEN_GAMMA)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / (1 << 53)


def _as_tag(part) -> bytes:
    if isinstance(part, bytes):
        return b"b" + part
    if isinstance(part, str):
        return b"s" + part.encode()
    if isinstance(part, (int, np.integer)):
        return b"i" + struct.pack("<Q", int(part) & MASK64)
    raise TypeError(f"cannot hash seed component of type {type(part).__name__}")


def hash64(*parts) -> int:
    """Stable 64-bit hash of a tuple of ints/strings (e.g. run seed, round, client, link)."""
    buf = bytearray()
    for p in parts:
        tag = _as_tag(p)
        buf += struct.pack("<I", len(tag))
        buf += tag
    return int.from_bytes(hashlib.blake2b(buf, digest_size=8).digest(), "little")


def mix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer, vectorized over uint64 arrays (wrapping arithmetic)."""
    return _mix64_inplace(np.array(x, dtype=np.uint64))


def _mix64_inplace(z: np.ndarray) -> np.ndarray:
    z ^= z >> _S30
    z *= _M1
    z ^= z >> _S27
    z *= _M2
    z ^= z >> _S31
    return z


def counter_bits53(seeds, count: int) -> np.ndarray:
    """The 53-bit integers behind ``counter_uniforms`` (as int64, same shapes)."""
    scalar = np.ndim(seeds) == 0
    keys = mix64(np.atleast_1d(np.asarray(seeds, dtype=np.uint64)))
    ctr = (np.arange(1, count + 1, dtype=np.uint64) * _GAMMA)[None, :]
    z = _mix64_inplace(keys[:, None] + ctr)
    z >>= _S11
    y = z.view(np.int64)
    return y[0] if scalar else y


def counter_uniforms(seeds, count: int) -> np.ndarray:
    """Uniforms on [0, 1) with 2**-53 granularity.

    ``seeds`` may be a scalar (result shape ``(count,)``) or a 1-D array of
    seeds (result shape ``(len(seeds), count)``).  Row ``r`` equals
    ``counter_uniforms(seeds[r], count)`` exactly.
    """
    u = counter_bits53(seeds, count).astype(np.float64)
    u *= _INV53
    return u
