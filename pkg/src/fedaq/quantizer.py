"""Stochastic uniform quantizer with a bit-packed wire format.

With ``bits`` = N the range ``[min, max]`` of a vector is divided into
``s = 2**N - 1`` equal bins whose ``s + 1`` edges are the representable
values.  An element inside a bin rounds to the upper edge with probability
equal to its fractional position in the bin, so the dequantized value is an
unbiased estimate of the input.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .bitpack import MAX_BITS, pack_levels, packed_size, unpack_levels
from .errors import FormatError, InvalidArgument, NumericError
from .params import ParamVector
from .rng import MASK64, counter_bits53, counter_uniforms

# d: u32, bits: u8, min: f64, max: f64, seed: u64 -- all little-endian
HEADER = struct.Struct("<IBddQ")


@dataclass(frozen=True)
class QuantizerSpec:
    bits: int

    def __post_init__(self):
        if not isinstance(self.bits, (int, np.integer)) or not 1 <= self.bits <= MAX_BITS:
            raise InvalidArgument(f"bits must be an integer in [1, {MAX_BITS}], got {self.bits!r}")

    @property
    def bins(self) -> int:
        return (1 << int(self.bits)) - 1


@dataclass(frozen=True)
class QuantizedTensor:
    min: float
    max: float
    bits: int
    d: int
    payload: bytes = field(repr=False)
    rng_seed: int = 0

    def __post_init__(self):
        if not 1 <= self.bits <= MAX_BITS:
            raise FormatError(f"bits out of range: {self.bits}")
        if self.d < 1:
            raise FormatError(f"element count must be >= 1, got {self.d}")
        if not (np.isfinite(self.min) and np.isfinite(self.max)) or self.min > self.max:
            raise FormatError(f"invalid range metadata [{self.min}, {self.max}]")
        if len(self.payload) != packed_size(self.d, self.bits):
            raise FormatError(
                f"payload is {len(self.payload)} bytes, expected "
                f"{packed_size(self.d, self.bits)}",
                offset=HEADER.size + min(len(self.payload), packed_size(self.d, self.bits)),
            )

    @property
    def bins(self) -> int:
        return (1 << self.bits) - 1

    @property
    def levels(self) -> np.ndarray:
        return unpack_levels(self.payload, self.bits, self.d)

    @property
    def payload_bits(self) -> int:
        return self.d * self.bits

    def to_bytes(self) -> bytes:
        return HEADER.pack(self.d, self.bits, self.min, self.max, self.rng_seed) + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "QuantizedTensor":
        if len(data) < HEADER.size:
            raise FormatError(f"truncated header: {len(data)} < {HEADER.size} bytes", offset=len(data))
        d, bits, lo, hi, seed = HEADER.unpack_from(data)
        if not 1 <= bits <= MAX_BITS:
            raise FormatError(f"bits out of range: {bits}", offset=4)
        expected = HEADER.size + packed_size(d, bits)
        if len(data) != expected:
            raise FormatError(
                f"serialized tensor is {len(data)} bytes, expected {expected}",
                offset=min(len(data), expected),
            )
        return cls(min=lo, max=hi, bits=bits, d=d, payload=bytes(data[HEADER.size:]), rng_seed=seed)


def _as_array(v) -> np.ndarray:
    if isinstance(v, ParamVector):
        return v.values
    arr = np.asarray(v, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise InvalidArgument("cannot quantize an empty vector")
    if not np.all(np.isfinite(arr)):
        raise NumericError("cannot quantize non-finite values")
    return arr


def _bin_position(x: np.ndarray, lo: float, span: float, s: int) -> tuple[np.ndarray, np.ndarray]:
    """Lower edge index in ``[0, s]`` and the fractional distance to the next edge."""
    pos = (x - lo) / span * s
    base = np.clip(np.floor(pos), 0, s)
    return base, pos - base


def _stochastic_levels(x: np.ndarray, lo: float, span: float, s: int, u: np.ndarray) -> np.ndarray:
    """Map ``x`` to edge indices in ``[0, s]``; ``u`` broadcasts against ``x``."""
    base, frac = _bin_position(x, lo, span, s)
    # frac == 0 (edge hit) never rounds up since u >= 0
    return np.minimum(base + (u < frac), s)


def _levels_to_values(levels: np.ndarray, lo: float, hi: float, s: int) -> np.ndarray:
    vals = lo + levels * ((hi - lo) / s)
    vals = np.where(levels == s, hi, vals)
    return np.clip(vals, lo, hi)


def quantize(v, spec: QuantizerSpec | int, seed: int) -> QuantizedTensor:
    """Quantize ``v`` with ``spec.bits`` bits per element, deterministically in ``seed``."""
    if not isinstance(spec, QuantizerSpec):
        spec = QuantizerSpec(int(spec))
    x = _as_array(v)
    seed = int(seed) & MASK64
    lo = float(x.min())
    hi = float(x.max())
    s = spec.bins
    span = hi - lo
    if span == 0.0:
        levels = np.zeros(x.size, dtype=np.uint64)
    else:
        u = counter_uniforms(seed, x.size)
        levels = _stochastic_levels(x, lo, span, s, u).astype(np.uint64)
    return QuantizedTensor(
        min=lo, max=hi, bits=spec.bits, d=x.size,
        payload=pack_levels(levels, spec.bits), rng_seed=seed,
    )


def dequantize(q: QuantizedTensor) -> ParamVector:
    levels = q.levels
    if q.max == q.min:
        return ParamVector(np.full(q.d, q.min))
    return ParamVector(_levels_to_values(levels.astype(np.float64), q.min, q.max, q.bins))


def quantize_dequantize_batch(v, spec: QuantizerSpec | int, seeds) -> np.ndarray:
    """Dequantized outputs for many seeds at once, shape ``(len(seeds), d)``.

    Row ``k`` equals ``dequantize(quantize(v, spec, seeds[k])).values``
    exactly; this skips the packing round trip and is meant for Monte-Carlo.
    """
    if not isinstance(spec, QuantizerSpec):
        spec = QuantizerSpec(int(spec))
    x = _as_array(v)
    seeds = np.asarray(seeds, dtype=np.uint64).reshape(-1)
    lo = float(x.min())
    hi = float(x.max())
    if hi == lo:
        return np.full((seeds.size, x.size), lo)
    s = spec.bins
    # each element has only two possible outputs; pick one per seed
    base, frac = _bin_position(x, lo, hi - lo, s)
    lower = _levels_to_values(base, lo, hi, s)
    upper = _levels_to_values(np.minimum(base + 1, s), lo, hi, s)
    # u < frac  <=>  u * 2**53 < ceil(frac * 2**53), both sides exact integers
    threshold = np.ceil(np.ldexp(frac, 53)).astype(np.int64)
    return np.where(counter_bits53(seeds, x.size) < threshold, upper, lower)


def quantization_error_sq(v, spec: QuantizerSpec | int, seed: int) -> float:
    x = _as_array(v)
    err = dequantize(quantize(x, spec, seed)).values - x
    return float(np.dot(err, err))


def variance_bound(d: int, bits: int, value_range: float) -> float:
    """Contracted error bound ``(d / s**2) * R**2``."""
    s = (1 << bits) - 1
    return d / s**2 * value_range**2


def tight_variance_bound(d: int, bits: int, value_range: float) -> float:
    """Worst case for the uniform stochastic quantizer, ``(d / (4 s**2)) * R**2``."""
    return variance_bound(d, bits, value_range) / 4.0
