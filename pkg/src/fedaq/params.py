"""Flat double-precision parameter vectors and their range statistics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import InvalidArgument, NumericError


class ParamVector:
    """Immutable, finite, 1-D float64 vector of model parameters or updates.

    The underlying array is marked read-only; every arithmetic helper
    returns a new vector.
    """

    __slots__ = ("_values",)

    def __init__(self, values: Iterable[float] | np.ndarray):
        arr = np.array(values, dtype=np.float64, copy=True).reshape(-1)
        if arr.size == 0:
            raise InvalidArgument("ParamVector must have at least one element")
        if not np.all(np.isfinite(arr)):
            raise NumericError("ParamVector entries must be finite")
        arr.flags.writeable = False
        self._values = arr

    @classmethod
    def zeros(cls, d: int) -> "ParamVector":
        return cls(np.zeros(d))

    @property
    def values(self) -> np.ndarray:
        return self._values

    def __len__(self) -> int:
        return self._values.size

    def __iter__(self):
        return iter(self._values.tolist())

    def __getitem__(self, idx):
        return self._values[idx]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ParamVector):
            return NotImplemented
        return np.array_equal(self._values, other._values)

    def __hash__(self):
        return hash(self._values.tobytes())

    def __repr__(self) -> str:
        return f"ParamVector({self._values.tolist()!r})"

    def __add__(self, other: "ParamVector") -> "ParamVector":
        return combine(self, other, 1.0, 1.0)

    def __sub__(self, other: "ParamVector") -> "ParamVector":
        return combine(self, other, 1.0, -1.0)


@dataclass(frozen=True)
class RangeStat:
    min: float
    max: float
    range: float


def range_of(v: ParamVector) -> RangeStat:
    if not isinstance(v, ParamVector):
        v = ParamVector(v)
    lo = float(v.values.min())
    hi = float(v.values.max())
    return RangeStat(min=lo, max=hi, range=hi - lo)


def combine(a: ParamVector, b: ParamVector, ca: float, cb: float) -> ParamVector:
    """Return ``ca * a + cb * b`` elementwise."""
    if len(a) != len(b):
        raise InvalidArgument(f"length mismatch: {len(a)} vs {len(b)}")
    if not (np.isfinite(ca) and np.isfinite(cb)):
        raise NumericError("combine coefficients must be finite")
    with np.errstate(over="ignore", invalid="ignore"):
        out = ca * a.values + cb * b.values
    if not np.all(np.isfinite(out)):
        raise NumericError("combine produced a non-finite result")
    return ParamVector(out)


def l2_norm_sq(v: ParamVector) -> float:
    x = v.values
    return float(np.dot(x, x))
