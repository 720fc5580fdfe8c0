import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedaq.allocation import (
    DOWNLINK,
    LOSSLESS,
    UPLINK,
    BitChoice,
    DownlinkOnlyAdaptive,
    EnergyParams,
    Fixed,
    JointAdaptive,
    Lossless,
    RangeTrace,
    Schedule,
    UplinkOnlyAdaptive,
    alpha_joint,
    alpha_uplink_only,
    beta_downlink_only,
    bins_of_bits,
    bits_downlink,
    bits_from_ratio,
    bits_uplink,
    brute_force_allocation,
    clamp_bits,
    continuous_bins,
    continuous_energy,
    energy_of_bits,
    joint_bits,
    link_terms,
    product_lower_bound,
)
from fedaq.errors import InfeasibleBudget, InvalidArgument


def random_trace(rng, K, n):
    return RangeTrace(rng.uniform(0.05, 3.0, (K, n)), rng.uniform(0.5, 20.0, K))


# -- bit rules ---------------------------------------------------------------

def test_bits_uplink_examples():
    assert bits_uplink(0.8, 0.004) == 8
    assert bits_uplink(0.37, 0.37) == 1
    assert bits_uplink(1.0, 0.0005) == 11


def test_bits_downlink_examples():
    assert bits_downlink(2.0, 0.004, 8) == 11
    assert bits_downlink(0.25, 0.25, 1) == 1
    assert bits_downlink(1.0, 0.003, 10) == 11


def test_exact_power_of_two_is_not_rounded_up():
    # 0.8 / 0.1 is 8.000000000000002 in floating point
    assert bits_uplink(0.8, 0.1) == 3
    assert bits_from_ratio(4.0, 0.5) == 3
    assert bits_uplink(0.81, 0.1) == 4


@pytest.mark.parametrize("R, alpha", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (1.0, -2.0), (math.inf, 1.0)])
def test_bits_invalid(R, alpha):
    with pytest.raises(InvalidArgument):
        bits_uplink(R, alpha)
    with pytest.raises(InvalidArgument):
        bits_downlink(R, alpha, 2)


def test_bits_downlink_invalid_n():
    with pytest.raises(InvalidArgument):
        bits_downlink(1.0, 0.1, 0)
    with pytest.raises(InvalidArgument):
        bits_downlink(1.0, 0.1, 0.5)


def test_clamp():
    assert clamp_bits(-3.2) == (1, True)
    assert clamp_bits(0.0) == (1, True)
    assert clamp_bits(0.5) == (1, False)
    assert clamp_bits(31.2) == (32, False)
    assert clamp_bits(40.0) == (32, True)
    assert bits_uplink(1.0, 1e-12) == 32


@given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e3), st.floats(1e-3, 1e3))
def test_bit_scale_invariance(R, alpha, c):
    b = bits_uplink(R, alpha)
    assert bits_uplink(R * c, alpha * c) in (b - 1, b, b + 1)
    # exact powers of two leave no room for rounding noise
    c2 = 2.0 ** round(math.log2(c))
    assert bits_uplink(R * c2, alpha * c2) == b


@given(st.floats(1e-4, 1e4), st.floats(1e-4, 1e2), st.integers(1, 64))
def test_downlink_is_uplink_at_beta(R, alpha, n):
    # the two roundings agree except when log2 lands within float noise of an integer
    direct = bits_downlink(R, alpha, n)
    via_beta = bits_from_ratio(R, alpha / math.sqrt(2 * n))
    assert abs(direct - via_beta) <= 1
    raw = math.log2(math.sqrt(2 * n) * R / alpha)
    if abs(raw - round(raw)) > 1e-9:
        assert direct == via_beta


# -- closed forms --------------------------------------------------------------

def test_alpha_joint_hand_example():
    trace = RangeTrace([[1.0]], [1.0])
    ep = EnergyParams(1.0, 1.0, 4.0, 1, 1, 1)
    assert alpha_joint(trace, ep) == pytest.approx(2**-1.75, rel=1e-14)
    assert alpha_joint(trace, ep) == pytest.approx(0.29730, abs=5e-6)


def test_alpha_joint_scale_and_budget_shift(rng):
    trace = random_trace(rng, 4, 3)
    ep = EnergyParams(1.5, 0.7, 5000.0, 20, 3, 4)
    a = alpha_joint(trace, ep)
    scaled = RangeTrace(trace.uplink * 3.7, trace.downlink * 3.7)
    assert alpha_joint(scaled, ep) == pytest.approx(3.7 * a, rel=1e-12)
    up, dn = joint_bits(trace, a)
    up2, dn2 = joint_bits(scaled, alpha_joint(scaled, ep))
    np.testing.assert_array_equal(up, up2)
    np.testing.assert_array_equal(dn, dn2)
    shift = ep.K * ep.n * ep.d * (ep.e1 + ep.e2)
    ep2 = EnergyParams(ep.e1, ep.e2, ep.E + shift, ep.d, ep.n, ep.K)
    assert alpha_joint(trace, ep2) == pytest.approx(a / 2, rel=1e-12)


def test_alpha_uplink_only_examples(rng):
    ep = EnergyParams(1.0, 1.0, 3.0, 1, 1, 1)
    a = alpha_uplink_only(RangeTrace([[1.0]], [1.0]), ep)
    assert a == pytest.approx(0.125, rel=1e-14)
    assert bits_uplink(1.0, a) == 3
    # constant trace
    ep = EnergyParams(2.0, 9.0, 600.0, 5, 3, 4)
    tr = RangeTrace(np.full((4, 3), 0.6), np.full(4, 1.0))
    assert alpha_uplink_only(tr, ep) == pytest.approx(0.6 * 2 ** (-600 / (4 * 3 * 5 * 2.0)), rel=1e-12)
    doubled = RangeTrace(tr.uplink * 2, tr.downlink)
    assert alpha_uplink_only(doubled, ep) == pytest.approx(2 * alpha_uplink_only(tr, ep), rel=1e-12)


def test_beta_downlink_only_examples():
    ep = EnergyParams(1.0, 1.0, 4.0, 1, 1, 1)
    b = beta_downlink_only(RangeTrace([[1.0]], [1.0]), ep)
    assert b == pytest.approx(2**-4, rel=1e-14)
    assert bits_from_ratio(1.0, b) == 4
    tr = RangeTrace([[1.0], [1.0]], [1.0, 4.0])
    ep = EnergyParams(1.0, 1.0, 4.0, 1, 1, 2)  # E2 / (K n d e2) = 2
    b = beta_downlink_only(tr, ep)
    assert b == pytest.approx(0.5, rel=1e-14)
    assert [bits_from_ratio(r, b) for r in tr.downlink] == [1, 3]
    tr = RangeTrace(np.ones((3, 2)), np.full(3, 2.5))
    ep = EnergyParams(1.0, 3.0, 90.0, 5, 2, 3)
    assert beta_downlink_only(tr, ep) == pytest.approx(2.5 * 2 ** (-90 / (3 * 2 * 5 * 3.0)), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(1, 6), st.integers(0, 2**32 - 1),
       st.floats(0.1, 10), st.floats(0.1, 10), st.floats(1.0, 40.0))
def test_closed_form_identities(K, n, seed, e1, e2, bits_per):
    rng = np.random.default_rng(seed)
    trace = random_trace(rng, K, n)
    d = 17
    E = bits_per * d * K * n * (e1 + e2)
    ep = EnergyParams(e1, e2, E, d, n, K)
    a = alpha_joint(trace, ep)
    s_up, s_dn = continuous_bins(trace, a)
    np.testing.assert_allclose(trace.uplink / s_up, a, rtol=1e-12)
    beta = a / math.sqrt(2 * n)
    np.testing.assert_allclose(trace.downlink / s_dn, beta, rtol=1e-12)
    assert continuous_energy(s_up, s_dn, ep) == pytest.approx(E, rel=1e-9)
    kw = dict(L=2.0, d=d, tau=3, eta=0.05)
    up, dn = link_terms(trace, s_up, s_dn, **kw)
    assert up == pytest.approx(dn, rel=1e-9)
    assert up + dn == pytest.approx(product_lower_bound(trace, s_up, s_dn, **kw), rel=1e-9)
    assert up + dn == pytest.approx(2 * 2.0 * d * a * a / (n * 3 * 0.05), rel=1e-9)


def test_uplink_and_downlink_only_energy_identity(rng):
    trace = random_trace(rng, 5, 3)
    ep = EnergyParams(1.3, 0.4, 2000.0, 11, 3, 5)
    a = alpha_uplink_only(trace, ep)
    assert ep.e1 * ep.d * np.log2(trace.uplink / a).sum() == pytest.approx(ep.E, rel=1e-9)
    b = beta_downlink_only(trace, ep)
    assert ep.e2 * ep.n * ep.d * np.log2(trace.downlink / b).sum() == pytest.approx(ep.E, rel=1e-9)


def test_ceiling_slack_on_energy(rng):
    for _ in range(30):
        K, n = rng.integers(1, 6, 2)
        trace = random_trace(rng, K, n)
        d = int(rng.integers(1, 50))
        ep = EnergyParams(rng.uniform(0.2, 3), rng.uniform(0.2, 3), 0.0 + rng.uniform(2, 10) * d * K * n * 3,
                          d, int(n), int(K))
        a = alpha_joint(trace, ep)
        up, dn = joint_bits(trace, a)
        if (up == 1).any() or (dn == 1).any():
            continue  # a clamp may add more than one bit
        slack = ep.e1 * K * n * d + ep.e2 * K * n * d
        assert energy_of_bits(up, dn, ep) <= ep.E + slack + 1e-9


def test_range_trace_validation():
    with pytest.raises(InvalidArgument):
        RangeTrace([[1.0, 0.0]], [1.0])
    with pytest.raises(InvalidArgument):
        RangeTrace([[1.0]], [1.0, 2.0])
    with pytest.raises(InvalidArgument):
        RangeTrace([[1.0]], [-1.0])
    tr = RangeTrace.from_observed([[0.0, 0.5], [2.0, 1.0]], [3.0, 0.0])
    assert tr.uplink.tolist() == [[0.5, 0.5], [2.0, 1.0]]
    assert tr.downlink.tolist() == [3.0, 0.5]
    assert (tr.K, tr.n) == (2, 2)
    with pytest.raises(InvalidArgument):
        alpha_joint(tr, EnergyParams(1, 1, 10, 1, 3, 2))


def test_energy_params_validation():
    with pytest.raises(InvalidArgument):
        EnergyParams(0.0, 1.0, 1.0, 1, 1, 1)
    with pytest.raises(InvalidArgument):
        EnergyParams(1.0, 1.0, 1.0, 0, 1, 1)


# -- brute force oracle --------------------------------------------------------

def itertools_optimum(trace, ep, grid, L=1.0, tau=1, eta=1.0):
    """Plain enumeration of every assignment; only for the tiniest cases."""
    K, n, d = ep.K, ep.n, ep.d
    best = None
    for combo in itertools.product(grid, repeat=K * n + K):
        up = np.array(combo[: K * n]).reshape(K, n)
        dn = np.array(combo[K * n:])
        if energy_of_bits(up, dn, ep) > ep.E * (1 + 1e-12):
            continue
        obj = sum(link_terms(trace, bins_of_bits(up), bins_of_bits(dn), L=L, d=d, tau=tau, eta=eta))
        if best is None or obj < best:
            best = obj
    return best


@pytest.mark.parametrize("K, n", [(1, 1), (1, 2), (2, 1), (1, 3), (2, 2)])
def test_pareto_oracle_matches_enumeration(rng, K, n):
    for _ in range(3):
        trace = random_trace(rng, K, n)
        d = 3
        E = rng.uniform(1.5, 4.5) * d * (K * n + K * n)
        ep = EnergyParams(1.0, 1.0, E, d, n, K)
        grid = range(1, 7)
        res = brute_force_allocation(trace, ep, grid, L=1.5, tau=2, eta=0.1)
        ref = itertools_optimum(trace, ep, grid, L=1.5, tau=2, eta=0.1)
        assert res.objective == pytest.approx(ref, rel=1e-12)
        assert res.energy <= E * (1 + 1e-12)
        assert energy_of_bits(res.uplink_bits, res.downlink_bits, ep) == pytest.approx(res.energy)
        terms = link_terms(trace, bins_of_bits(res.uplink_bits), bins_of_bits(res.downlink_bits),
                           L=1.5, d=d, tau=2, eta=0.1)
        assert sum(terms) == pytest.approx(res.objective, rel=1e-12)


def test_oracle_max_bits_when_budget_is_ample(rng):
    trace = random_trace(rng, 2, 2)
    ep = EnergyParams(1.0, 2.0, 1e9, 4, 2, 2)
    res = brute_force_allocation(trace, ep, range(1, 9))
    assert (res.uplink_bits == 8).all() and (res.downlink_bits == 8).all()


def test_oracle_symmetric_case_has_equal_ratios():
    # R_up = sqrt(2) R_dn, equal per-bit link costs: s_up = s_dn
    trace = RangeTrace([[math.sqrt(2) * 0.5]], [0.5])
    ep = EnergyParams(1.0, 1.0, 10.0, 1, 1, 1)
    res = brute_force_allocation(trace, ep, range(1, 11))
    assert res.uplink_bits[0, 0] == res.downlink_bits[0] == 5
    ratio_up = trace.uplink[0, 0] / bins_of_bits(res.uplink_bits)[0, 0]
    ratio_dn = trace.downlink[0] / bins_of_bits(res.downlink_bits)[0]
    assert ratio_up / ratio_dn == pytest.approx(math.sqrt(2))


def test_oracle_errors(rng):
    trace = random_trace(rng, 1, 1)
    with pytest.raises(InfeasibleBudget):
        brute_force_allocation(trace, EnergyParams(1.0, 1.0, 1.5, 1, 1, 1))
    with pytest.raises(InvalidArgument):
        brute_force_allocation(random_trace(rng, 3, 4), EnergyParams(1.0, 1.0, 1e3, 1, 4, 3))
    with pytest.raises(InvalidArgument):
        brute_force_allocation(trace, EnergyParams(1.0, 1.0, 100, 1, 1, 1), range(0, 5))


# -- policies ------------------------------------------------------------------

def test_fixed_and_lossless():
    assert Fixed(8).choose(UPLINK, 3.0, 0, 4) == BitChoice(8)
    assert Fixed(8).choose(DOWNLINK, 0.0, 9, 4) == BitChoice(8)
    assert Lossless().choose(UPLINK, 1.0, 0, 2) is LOSSLESS
    for bad in (0, 33, 2.5):
        with pytest.raises(InvalidArgument):
            Fixed(bad)


def test_joint_policy_matches_bit_rules():
    p = JointAdaptive(0.004)
    assert p.choose(UPLINK, 0.8, 0, 8).bits == bits_uplink(0.8, 0.004) == 8
    assert p.choose(DOWNLINK, 2.0, 0, 8).bits == bits_downlink(2.0, 0.004, 8) == 11
    assert p.choose(UPLINK, 0.004, 0, 8) == BitChoice(1, True)
    assert p.choose(UPLINK, 0.0, 0, 8) == BitChoice(1, True)
    assert p.choose(UPLINK, 1e9, 0, 8) == BitChoice(32, True)
    with pytest.raises(InvalidArgument):
        JointAdaptive(0.0)


def test_single_link_policies():
    up = UplinkOnlyAdaptive(0.01)
    assert up.choose(UPLINK, 1.0, 0, 3).bits == 7
    assert up.choose(DOWNLINK, 1.0, 0, 3) is LOSSLESS
    dn = DownlinkOnlyAdaptive(0.5)
    assert dn.choose(DOWNLINK, 4.0, 0, 3).bits == 3
    assert dn.choose(UPLINK, 4.0, 0, 3) is LOSSLESS


def test_schedule_policy():
    p = Schedule((2, 3, 4), (8,))
    assert [p.choose(UPLINK, 1.0, m, 2).bits for m in range(5)] == [2, 3, 4, 4, 4]
    assert p.choose(DOWNLINK, 1.0, 3, 2).bits == 8
    assert p.describe() == {"kind": "schedule", "uplink_bits": [2, 3, 4], "downlink_bits": [8]}
    with pytest.raises(InvalidArgument):
        Schedule((), (3,))
    with pytest.raises(InvalidArgument):
        Schedule((40,), (3,))
