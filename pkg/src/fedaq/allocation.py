"""Per-round, per-link quantization bit widths.

The adaptive rules keep the ratio of range to bin count constant: uplink
updates use ``R / s = alpha`` and the broadcast model uses
``R / s = beta = alpha / sqrt(2 n)``.  ``alpha_joint`` and friends give the
constant that spends an energy budget exactly when the whole range trace is
known in advance; online runs use a fixed configured alpha instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bitpack import MAX_BITS
from .errors import InfeasibleBudget, InvalidArgument

MIN_BITS = 1

# log2 values this close to an integer are treated as that integer, so
# ceil() does not add a bit for representation noise in R / alpha.
_INT_SNAP = 1e-12


def clamp_bits(raw: float) -> tuple[int, bool]:
    """Ceil ``raw`` and clamp into ``[1, 32]``; also report whether clamping happened."""
    nearest = round(raw)
    if abs(raw - nearest) <= _INT_SNAP * max(1.0, abs(raw)):
        raw = nearest
    bits = math.ceil(raw)
    if bits < MIN_BITS:
        return MIN_BITS, True
    if bits > MAX_BITS:
        return MAX_BITS, True
    return int(bits), False


def _check_positive(**kw):
    for name, val in kw.items():
        if not (val > 0 and math.isfinite(val)):
            raise InvalidArgument(f"{name} must be positive and finite, got {val!r}")


def bits_uplink(R: float, alpha: float) -> int:
    _check_positive(R=R, alpha=alpha)
    return clamp_bits(math.log2(R / alpha))[0]


def bits_downlink(R: float, alpha: float, n: int) -> int:
    _check_positive(R=R, alpha=alpha)
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidArgument(f"n must be a positive integer, got {n!r}")
    return clamp_bits(math.log2(math.sqrt(2 * n) * R / alpha))[0]


def bits_from_ratio(R: float, ratio: float) -> int:
    """``ceil(log2(R / ratio))`` clamped; the downlink-only rule with ``ratio = beta``."""
    _check_positive(R=R, ratio=ratio)
    return clamp_bits(math.log2(R / ratio))[0]


@dataclass(frozen=True)
class RangeTrace:
    """Observed ranges: ``uplink[m, i]`` for client updates, ``downlink[m]`` for the model."""

    uplink: np.ndarray
    downlink: np.ndarray

    def __post_init__(self):
        up = np.array(self.uplink, dtype=np.float64, ndmin=2)
        dn = np.array(self.downlink, dtype=np.float64).reshape(-1)
        if up.ndim != 2 or up.shape[0] != dn.size or up.size == 0:
            raise InvalidArgument(
                f"trace shapes inconsistent: uplink {up.shape}, downlink {dn.shape}"
            )
        if not (np.all(up > 0) and np.all(dn > 0)):
            raise InvalidArgument("all ranges in a trace must be positive")
        if not (np.all(np.isfinite(up)) and np.all(np.isfinite(dn))):
            raise InvalidArgument("ranges must be finite")
        up.flags.writeable = False
        dn.flags.writeable = False
        object.__setattr__(self, "uplink", up)
        object.__setattr__(self, "downlink", dn)

    @classmethod
    def from_observed(cls, uplink, downlink) -> "RangeTrace":
        """Build a trace from raw observations, replacing zero ranges with the
        smallest positive range seen in the trace."""
        up = np.array(uplink, dtype=np.float64, ndmin=2)
        dn = np.array(downlink, dtype=np.float64).reshape(-1)
        both = np.concatenate([up.ravel(), dn])
        positive = both[both > 0]
        if positive.size == 0:
            raise InvalidArgument("trace has no positive range to substitute for zeros")
        floor = positive.min()
        return cls(np.where(up > 0, up, floor), np.where(dn > 0, dn, floor))

    @property
    def K(self) -> int:
        return self.uplink.shape[0]

    @property
    def n(self) -> int:
        return self.uplink.shape[1]


@dataclass(frozen=True)
class EnergyParams:
    e1: float
    e2: float
    E: float
    d: int
    n: int
    K: int

    def __post_init__(self):
        for name in ("e1", "e2", "E"):
            _check_positive(**{name: getattr(self, name)})
        for name in ("d", "n", "K"):
            if int(getattr(self, name)) < 1:
                raise InvalidArgument(f"{name} must be >= 1")

    def check_trace(self, trace: RangeTrace):
        if trace.K != self.K or trace.n != self.n:
            raise InvalidArgument(
                f"trace is K={trace.K}, n={trace.n}; energy params say K={self.K}, n={self.n}"
            )


def alpha_joint(trace: RangeTrace, ep: EnergyParams) -> float:
    ep.check_trace(trace)
    K, n, d, e1, e2 = ep.K, ep.n, ep.d, ep.e1, ep.e2
    up = np.log2(trace.uplink).sum()
    dn = np.log2(math.sqrt(2 * n) * trace.downlink).sum()
    expo = (
        e1 * up / (K * n * (e1 + e2))
        + e2 * dn / (K * (e1 + e2))
        - ep.E / (K * n * d * (e1 + e2))
    )
    return float(2.0**expo)


def alpha_uplink_only(trace: RangeTrace, ep: EnergyParams) -> float:
    """Uplink-only constant; ``ep.E`` is the uplink budget and ``ep.e2`` is unused."""
    ep.check_trace(trace)
    K, n, d = ep.K, ep.n, ep.d
    expo = np.log2(trace.uplink).sum() / (K * n) - ep.E / (K * n * d * ep.e1)
    return float(2.0**expo)


def beta_downlink_only(trace: RangeTrace, ep: EnergyParams) -> float:
    """Downlink-only constant; ``ep.E`` is the downlink budget and ``ep.e1`` is unused."""
    ep.check_trace(trace)
    K, n, d = ep.K, ep.n, ep.d
    expo = np.log2(trace.downlink).sum() / K - ep.E / (K * n * d * ep.e2)
    return float(2.0**expo)


def continuous_bins(trace: RangeTrace, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Unrounded optimal bin counts ``(s_up[K, n], s_dn[K])`` for a given alpha."""
    _check_positive(alpha=alpha)
    return trace.uplink / alpha, math.sqrt(2 * trace.n) * trace.downlink / alpha


def joint_bits(trace: RangeTrace, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Ceil-rounded bit widths for every slot of a trace."""
    n = trace.n
    up = np.array([[bits_uplink(r, alpha) for r in row] for row in trace.uplink], dtype=np.int64)
    dn = np.array([bits_downlink(r, alpha, n) for r in trace.downlink], dtype=np.int64)
    return up, dn


def bins_of_bits(bits) -> np.ndarray:
    return np.power(2.0, np.asarray(bits, dtype=np.float64)) - 1.0


def energy_of_bits(up_bits, dn_bits, ep: EnergyParams) -> float:
    return float(
        ep.e1 * ep.d * np.sum(up_bits) + ep.e2 * ep.n * ep.d * np.sum(dn_bits)
    )


def continuous_energy(s_up, s_dn, ep: EnergyParams) -> float:
    """Energy of an unrounded allocation, charging ``log2 s`` bits per element."""
    return float(
        ep.e1 * ep.d * np.log2(s_up).sum() + ep.e2 * ep.n * ep.d * np.log2(s_dn).sum()
    )


def link_terms(
    trace: RangeTrace, s_up, s_dn, *, L: float = 1.0, d: int = 1, tau: int = 1, eta: float = 1.0
) -> tuple[float, float]:
    """The two quantization terms of the convergence bound: ``(uplink, downlink)``."""
    s_up = np.asarray(s_up, dtype=np.float64)
    s_dn = np.asarray(s_dn, dtype=np.float64)
    if s_up.shape != trace.uplink.shape or s_dn.shape != trace.downlink.shape:
        raise InvalidArgument("bin arrays do not match the trace dimensions")
    if np.any(s_up <= 0) or np.any(s_dn <= 0):
        raise InvalidArgument("bin counts must be positive")
    K, n = trace.K, trace.n
    up = L * d / (n**2 * K * tau * eta) * np.sum((trace.uplink / s_up) ** 2)
    dn = 2 * L * d / (K * tau * eta) * np.sum((trace.downlink / s_dn) ** 2)
    return float(up), float(dn)


def product_lower_bound(
    trace: RangeTrace, s_up, s_dn, *, L: float = 1.0, d: int = 1, tau: int = 1, eta: float = 1.0
) -> float:
    """Cauchy-Schwarz/AM-GM lower bound on the summed link terms, in product form."""
    K, n = trace.K, trace.n
    dn_sum = np.sum(trace.downlink / np.asarray(s_dn))
    up_sum = np.sum(trace.uplink / np.asarray(s_up))
    return float(2 * math.sqrt(2) * L * d / (n * math.sqrt(n) * K**2 * tau * eta) * dn_sum * up_sum)


@dataclass(frozen=True)
class BruteForceResult:
    uplink_bits: np.ndarray
    downlink_bits: np.ndarray
    objective: float
    energy: float


def brute_force_allocation(
    trace: RangeTrace,
    ep: EnergyParams,
    bit_grid: Sequence[int] = range(1, 13),
    *,
    L: float = 1.0,
    tau: int = 1,
    eta: float = 1.0,
) -> BruteForceResult:
    """Exact integer optimum of the link terms under the energy budget.

    Every assignment from ``bit_grid`` is covered; partial assignments are
    merged with a Pareto frontier over (energy spent, objective so far),
    which is exact because the objective is a sum of per-slot terms.
    """
    ep.check_trace(trace)
    grid = sorted(set(int(b) for b in bit_grid))
    if not grid or grid[0] < 1 or grid[-1] > 12:
        raise InvalidArgument("bit_grid must be a non-empty subset of [1, 12]")
    K, n, d = ep.K, ep.n, ep.d
    if K * n + K > 12:
        raise InvalidArgument(f"{K * n + K} bit slots exceed the enumeration limit of 12")

    up_w = L * d / (n**2 * K * tau * eta)
    dn_w = 2 * L * d / (K * tau * eta)
    slots = [(ep.e1 * d, up_w * r * r) for r in trace.uplink.ravel()]
    slots += [(ep.e2 * n * d, dn_w * r * r) for r in trace.downlink]
    budget = ep.E * (1 + 1e-12)

    # frontier entries: (energy, objective, bits tuple)
    frontier: list[tuple[float, float, tuple[int, ...]]] = [(0.0, 0.0, ())]
    for cost, coef in slots:
        cand = []
        for energy, obj, bits in frontier:
            for b in grid:
                e = energy + cost * b
                if e > budget:
                    break
                s = (1 << b) - 1
                cand.append((e, obj + coef / (s * s), bits + (b,)))
        if not cand:
            raise InfeasibleBudget(f"budget {ep.E} cannot cover the minimum bit width")
        cand.sort(key=lambda t: (t[0], t[1]))
        frontier = []
        best = math.inf
        for item in cand:
            if item[1] < best:
                frontier.append(item)
                best = item[1]

    energy, obj, bits = min(frontier, key=lambda t: (t[1], t[0]))
    arr = np.array(bits, dtype=np.int64)
    return BruteForceResult(
        uplink_bits=arr[: K * n].reshape(K, n),
        downlink_bits=arr[K * n:],
        objective=obj,
        energy=energy,
    )


# -- policies ---------------------------------------------------------------

UPLINK = "uplink"
DOWNLINK = "downlink"


@dataclass(frozen=True)
class BitChoice:
    """Bits for one transmission; ``bits is None`` means lossless passthrough."""

    bits: int | None
    clamped: bool = False


LOSSLESS = BitChoice(None)


class AllocationPolicy:
    name = "policy"

    def choose(self, link: str, value_range: float, round_idx: int, n: int) -> BitChoice:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.name}


def _check_fixed_bits(bits: int):
    if not isinstance(bits, (int, np.integer)) or not MIN_BITS <= bits <= MAX_BITS:
        raise InvalidArgument(f"bits must be an integer in [1, 32], got {bits!r}")


def _adaptive(raw_ratio: float, value_range: float) -> BitChoice:
    # zero-range tensors cost the minimum width
    if value_range <= 0:
        return BitChoice(MIN_BITS, True)
    bits, clamped = clamp_bits(math.log2(value_range / raw_ratio))
    return BitChoice(bits, clamped)


@dataclass(frozen=True)
class Lossless(AllocationPolicy):
    name = "lossless"

    def choose(self, link, value_range, round_idx, n):
        return LOSSLESS


@dataclass(frozen=True)
class Fixed(AllocationPolicy):
    bits: int
    name = "fixed"

    def __post_init__(self):
        _check_fixed_bits(self.bits)

    def choose(self, link, value_range, round_idx, n):
        return BitChoice(int(self.bits))

    def describe(self):
        return {"kind": self.name, "bits": int(self.bits)}


@dataclass(frozen=True)
class JointAdaptive(AllocationPolicy):
    alpha: float
    name = "joint"

    def __post_init__(self):
        _check_positive(alpha=self.alpha)

    def choose(self, link, value_range, round_idx, n):
        if link == UPLINK:
            return _adaptive(self.alpha, value_range)
        return _adaptive(self.alpha / math.sqrt(2 * n), value_range)

    def describe(self):
        return {"kind": self.name, "alpha": self.alpha}


@dataclass(frozen=True)
class UplinkOnlyAdaptive(AllocationPolicy):
    """Adaptive uplink; the broadcast is sent losslessly."""

    alpha: float
    name = "uplink"

    def __post_init__(self):
        _check_positive(alpha=self.alpha)

    def choose(self, link, value_range, round_idx, n):
        if link == UPLINK:
            return _adaptive(self.alpha, value_range)
        return LOSSLESS

    def describe(self):
        return {"kind": self.name, "alpha": self.alpha}


@dataclass(frozen=True)
class DownlinkOnlyAdaptive(AllocationPolicy):
    """Adaptive broadcast with ``bits = ceil(log2(R / beta))``; updates sent losslessly."""

    beta: float
    name = "downlink"

    def __post_init__(self):
        _check_positive(beta=self.beta)

    def choose(self, link, value_range, round_idx, n):
        if link == DOWNLINK:
            return _adaptive(self.beta, value_range)
        return LOSSLESS

    def describe(self):
        return {"kind": self.name, "beta": self.beta}


@dataclass(frozen=True)
class Schedule(AllocationPolicy):
    """User-given per-round widths; rounds past the end reuse the last entry."""

    uplink_bits: tuple[int, ...] = field(default=())
    downlink_bits: tuple[int, ...] = field(default=())
    name = "schedule"

    def __post_init__(self):
        object.__setattr__(self, "uplink_bits", tuple(int(b) for b in self.uplink_bits))
        object.__setattr__(self, "downlink_bits", tuple(int(b) for b in self.downlink_bits))
        if not self.uplink_bits or not self.downlink_bits:
            raise InvalidArgument("schedule needs at least one uplink and one downlink entry")
        for b in self.uplink_bits + self.downlink_bits:
            _check_fixed_bits(b)

    def choose(self, link, value_range, round_idx, n):
        seq = self.uplink_bits if link == UPLINK else self.downlink_bits
        return BitChoice(seq[min(round_idx, len(seq) - 1)])

    def describe(self):
        return {
            "kind": self.name,
            "uplink_bits": list(self.uplink_bits),
            "downlink_bits": list(self.downlink_bits),
        }
