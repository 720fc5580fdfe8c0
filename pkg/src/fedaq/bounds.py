"""Right-hand sides of the quantized-FL convergence bounds.

The bound on the averaged squared gradient norm splits into four terms:
uplink quantization, downlink quantization, initial sub-optimality and SGD
noise.  The uplink-only and downlink-only variants drop the other link's
quantization term.  L, sigma^2 and f(w0) - f* are analysis constants that
the caller supplies.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .allocation import RangeTrace, link_terms
from .errors import InvalidArgument


@dataclass(frozen=True)
class BoundInputs:
    L: float
    eta: float
    sigma_sq: float
    f0_minus_fstar: float
    d: int
    n: int
    K: int
    tau: int
    trace: RangeTrace
    s_up: np.ndarray
    s_dn: np.ndarray

    def __post_init__(self):
        if not (self.L > 0 and self.eta > 0):
            raise InvalidArgument("L and eta must be positive")
        if self.sigma_sq < 0 or self.f0_minus_fstar < 0:
            raise InvalidArgument("sigma_sq and f0_minus_fstar must be non-negative")
        for name in ("d", "n", "K", "tau"):
            if int(getattr(self, name)) < 1:
                raise InvalidArgument(f"{name} must be >= 1")
        s_up = np.asarray(self.s_up, dtype=np.float64)
        s_dn = np.asarray(self.s_dn, dtype=np.float64)
        if self.trace.K != self.K or self.trace.n != self.n:
            raise InvalidArgument("trace dimensions do not match (K, n)")
        if s_up.shape != (self.K, self.n) or s_dn.shape != (self.K,):
            raise InvalidArgument("bin arrays do not match (K, n)")
        if np.any(s_up < 1) or np.any(s_dn < 1):
            raise InvalidArgument("bin counts must be >= 1")
        object.__setattr__(self, "s_up", s_up)
        object.__setattr__(self, "s_dn", s_dn)


@dataclass(frozen=True)
class BoundTerms:
    uplink_term: float
    downlink_term: float
    init_term: float
    sgd_term: float
    total: float


def eta_condition_ok(L: float, eta: float, tau: int) -> bool:
    """Step-size feasibility: ``1 - L eta - 2 tau (tau - 1) L^2 eta^2 >= 0``."""
    return 1 - L * eta - 2 * tau * (tau - 1) * L**2 * eta**2 >= 0


def _common_terms(b: BoundInputs) -> tuple[float, float, float, float]:
    if not eta_condition_ok(b.L, b.eta, b.tau):
        warnings.warn(
            f"step size eta={b.eta} violates the feasibility condition for L={b.L}, tau={b.tau}",
            RuntimeWarning,
            stacklevel=3,
        )
    up, dn = link_terms(b.trace, b.s_up, b.s_dn, L=b.L, d=b.d, tau=b.tau, eta=b.eta)
    init = 2 * b.f0_minus_fstar / (b.K * b.tau * b.eta)
    sgd = (
        b.L * b.eta * b.sigma_sq
        + b.L**2 * b.eta**2 * (b.n + 1) * (b.tau - 1) * b.sigma_sq
    ) / b.n
    return up, dn, init, sgd


def theorem1_rhs(b: BoundInputs) -> BoundTerms:
    up, dn, init, sgd = _common_terms(b)
    return BoundTerms(up, dn, init, sgd, up + dn + init + sgd)


def theorem2_rhs(b: BoundInputs) -> float:
    """Uplink-only quantization bound."""
    up, _, init, sgd = _common_terms(b)
    return up + init + sgd


def theorem3_rhs(b: BoundInputs) -> float:
    """Downlink-only quantization bound."""
    _, dn, init, sgd = _common_terms(b)
    return dn + init + sgd


def estimate_smoothness(
    grad: Callable[[np.ndarray], np.ndarray],
    w: np.ndarray,
    *,
    probes: int = 8,
    step: float = 1e-4,
    seed: int = 0,
) -> float:
    """Crude lower estimate of L from gradient differences along random directions.

    Report-only: returns ``max ||g(w + h u) - g(w)|| / h`` over unit
    directions ``u``.  Not a certified constant.
    """
    w = np.asarray(w, dtype=np.float64)
    rng = np.random.default_rng(seed)
    g0 = grad(w)
    best = 0.0
    for _ in range(probes):
        u = rng.standard_normal(w.size)
        u /= np.linalg.norm(u)
        best = max(best, float(np.linalg.norm(grad(w + step * u) - g0) / step))
    return best
