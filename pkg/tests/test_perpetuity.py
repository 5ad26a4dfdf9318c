"""Cycle functionals and the affine recursion: folds, diagnostics, depth choice."""

import io
import math

import numpy as np
import pytest

import smiq
from smiq import (
    CapExceededError,
    CyclePair,
    MomentConditionError,
    RateMap,
    SreDiagnostics,
    Trajectory,
)


def test_cycle_functionals_two_segment_oracle():
    # frozen quadrature values for one fixed cycle
    cycle = Trajectory(states=[0, 1], durations=[0.6, 0.9])
    rates = RateMap(lam=np.array([1.4, 0.7]), mu=np.array([0.5, 1.2]))
    pair = smiq.cycle_functionals(cycle, rates)
    assert pair.c == pytest.approx(0.25157855305975646, rel=1e-12)
    assert pair.d == pytest.approx(0.6316834666122969, rel=1e-12)


def test_forward_recursion_hand_cases():
    assert smiq.forward_recursion([(0.5, 1.0), (0.5, 1.0)]) == pytest.approx(1.5)
    assert smiq.forward_recursion([(0.5, 1.0)], v0=2.0) == pytest.approx(2.0)
    assert smiq.forward_recursion([], v0=3.25) == 3.25


def test_estimate_constants_exact_case():
    pairs = [CyclePair(0.5, 1.0)] * 100
    diag = smiq.estimate_constants(pairs, e_pi_lambda=1.0, mean_cycle_len=1.0)
    assert diag.mean_c == 0.5
    assert diag.a1 == pytest.approx(2.0)
    assert diag.r == pytest.approx(math.log(2.0))
    assert diag.mean_log_c == pytest.approx(math.log(0.5))


def test_estimate_constants_underflowed_multipliers():
    # very long cycles underflow every multiplier to zero; the recursion
    # then forgets its past in one step and the decay rate is infinite
    pairs = [CyclePair(0.0, 1.0)] * 50
    diag = smiq.estimate_constants(pairs, e_pi_lambda=2.0, mean_cycle_len=3.0)
    assert diag.mean_c == 0.0
    assert diag.r == math.inf
    assert diag.a1 == pytest.approx(6.0)
    assert smiq.choose_n(diag, 1e-9) == 1


def test_estimate_constants_rejects_bad_input():
    with pytest.raises(ValueError):
        smiq.estimate_constants([], 1.0, 1.0)
    with pytest.raises(ValueError):
        smiq.estimate_constants([CyclePair(1.5, 1.0)], 1.0, 1.0)
    with pytest.raises(MomentConditionError):
        smiq.estimate_constants([CyclePair(1.0, 1.0)] * 10, 1.0, 1.0)


def test_choose_n_minimality():
    diag = SreDiagnostics(
        mean_c=0.5,
        mean_d=1.0,
        a1=2.0,
        r=math.log(2.0),
        mean_log_c=math.log(0.5),
        mean_log_plus_d=0.0,
    )
    n = smiq.choose_n(diag, 1e-6)
    assert n == 21
    assert diag.a1 * math.exp(-diag.r * n) <= 1e-6
    assert diag.a1 * math.exp(-diag.r * (n - 1)) > 1e-6
    assert smiq.choose_n(diag, 10.0) == 1
    with pytest.raises(ValueError):
        smiq.choose_n(diag, 0.0)


def test_fold_distribution_invariant_under_order_reversal(ex1):
    # reversing the pair order leaves the folded value's law unchanged
    model, rates = ex1
    rng = smiq.stream_from_seed(31)
    c, d, _ = smiq.sample_cycle_data(model, rates, 2, 20_000, rng)
    n, depth = 10_000, 12
    rng2 = smiq.stream_from_seed(32)
    idx_a = rng2.integers(0, c.size, (n, depth))
    idx_b = rng2.integers(0, c.size, (n, depth))

    def fold(idx, flip):
        v = np.zeros(n)
        order = range(depth - 1, -1, -1) if flip else range(depth)
        for k in order:
            v = c[idx[:, k]] * v + d[idx[:, k]]
        return v

    va, vb = fold(idx_a, False), fold(idx_b, True)
    grid = np.sort(np.concatenate([va, vb]))

    def ecdf(x):
        return np.searchsorted(np.sort(x), grid, side="right") / x.size

    ks = np.abs(ecdf(va) - ecdf(vb)).max()
    assert ks < 1.63 * math.sqrt(2 / n)


def test_recursion_mean_stays_below_bound(ex1_sampler):
    # E[V_n] never exceeds the plug-in constant a1 at any depth
    rng = smiq.stream_from_seed(33)
    for depth in (1, 2, 4, 8):
        v = ex1_sampler.sample_V_many(2, 30_000, rng, depth=depth)
        a1 = ex1_sampler.diagnostics[2].a1
        se = v.std(ddof=1) / math.sqrt(v.size)
        assert v.mean() <= a1 + 3 * se


def test_both_cycle_routes_agree(ex1):
    # the segment-loop route and the batch kernel route sample the same law
    model, rates = ex1
    c, d, _ = smiq.sample_cycle_data(model, rates, 2, 20_000, smiq.stream_from_seed(31))
    pairs = smiq.sample_cycles(model, rates, 2, 4_000, smiq.stream_from_seed(34))
    ca = np.array([p.c for p in pairs])
    da = np.array([p.d for p in pairs])
    z_c = (ca.mean() - c.mean()) / math.sqrt(
        ca.var(ddof=1) / ca.size + c.var(ddof=1) / c.size
    )
    z_d = (da.mean() - d.mean()) / math.sqrt(
        da.var(ddof=1) / da.size + d.var(ddof=1) / d.size
    )
    assert abs(z_c) < 3.5
    assert abs(z_d) < 3.5


def test_pairs_from_trajectory_matches_decomposition(ex1):
    model, rates = ex1
    rng = smiq.stream_from_seed(35)
    traj = smiq.sample_trajectory(model, 50.0, rng)
    pairs = smiq.pairs_from_trajectory(traj, 2, rates)
    dec = smiq.decompose_cycles(traj, 2)
    assert len(pairs) == len(dec.cycles)
    for pair, cycle in zip(pairs, dec.cycles):
        ref = smiq.cycle_functionals(cycle, rates)
        assert pair.c == pytest.approx(ref.c, rel=1e-12)
        assert pair.d == pytest.approx(ref.d, rel=1e-12)


def test_sample_cycle_starts_and_stays_off_anchor(ex1):
    model, _ = ex1
    rng = smiq.stream_from_seed(36)
    for _ in range(20):
        cycle = smiq.sample_cycle(model, 2, rng)
        assert cycle.states[0] == 2
        assert 2 not in cycle.states[1:]


def test_sample_cycle_respects_step_cap(ex1):
    model, _ = ex1
    rng = smiq.stream_from_seed(37)
    with pytest.raises(CapExceededError):
        smiq.sample_cycle(model, 2, rng, step_cap=1)


def test_pairs_to_csv_round_trips():
    pairs = [CyclePair(0.25, 1.5), CyclePair(0.1234567890123456, 2.0)]
    buf = io.StringIO()
    smiq.pairs_to_csv(pairs, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "c,d"
    back = [tuple(float(v) for v in line.split(",")) for line in lines[1:]]
    assert back == [(p.c, p.d) for p in pairs]
