"""Little-endian, bit-contiguous packing of fixed-width unsigned integers.

Element ``j`` occupies global bit positions ``j*bits .. j*bits + bits - 1``,
least significant bit first; global bit ``p`` lives in byte ``p // 8`` at bit
``p % 8``.  The final byte is zero-padded.
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError, InvalidArgument

MAX_BITS = 32


def packed_size(d: int, bits: int) -> int:
    return (d * bits + 7) // 8


def pack_levels(levels, bits: int) -> bytes:
    if not 1 <= bits <= MAX_BITS:
        raise InvalidArgument(f"bits must be in [1, {MAX_BITS}], got {bits}")
    lv = np.asarray(levels, dtype=np.uint64).reshape(-1)
    if lv.size and int(lv.max()) >> bits:
        raise InvalidArgument(f"level {int(lv.max())} does not fit in {bits} bits")
    shifts = np.arange(bits, dtype=np.uint64)
    bitmat = ((lv[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.uint8)
    return np.packbits(bitmat.reshape(-1), bitorder="little").tobytes()


def unpack_levels(payload: bytes, bits: int, d: int) -> np.ndarray:
    if not 1 <= bits <= MAX_BITS:
        raise InvalidArgument(f"bits must be in [1, {MAX_BITS}], got {bits}")
    expected = packed_size(d, bits)
    if len(payload) != expected:
        raise FormatError(
            f"payload holds {len(payload)} bytes, expected {expected} for d={d}, bits={bits}",
            offset=min(len(payload), expected),
        )
    raw = np.frombuffer(payload, dtype=np.uint8)
    flat = np.unpackbits(raw, bitorder="little")
    if d * bits < flat.size and flat[d * bits:].any():
        raise FormatError("non-zero padding bits", offset=(d * bits) // 8)
    bitmat = flat[: d * bits].reshape(d, bits).astype(np.uint64)
    weights = np.uint64(1) << np.arange(bits, dtype=np.uint64)
    return (bitmat * weights[None, :]).sum(axis=1, dtype=np.uint64)
