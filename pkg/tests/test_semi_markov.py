"""Environment chain: validation, stationary laws, trajectories, cycles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import expon

import smiq
from smiq import Exponential, SemiMarkovModel


def alternation(mean0=1.0, mean1=1.0):
    """Two states that strictly alternate with exponential sojourns."""
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    sojourns = {
        (0, 1): Exponential(1.0 / mean0),
        (1, 0): Exponential(1.0 / mean1),
    }
    return SemiMarkovModel(states=[0, 1], P=P, sojourns=sojourns)


def test_validate_accepts_example1(ex1):
    report = smiq.validate_model(ex1[0])
    assert report.ok
    assert "[ok" in report.summary()


def test_validate_flags_bad_row_sum():
    model = alternation()
    model.P = np.array([[0.0, 0.9], [1.0, 0.0]])
    report = smiq.validate_model(model)
    assert not report.ok
    assert any(not c.passed for c in report.checks)


def test_validate_flags_nonzero_diagonal():
    model = alternation()
    model.P = np.array([[0.5, 0.5], [1.0, 0.0]])
    assert not smiq.validate_model(model).ok


def test_validate_flags_reducible_kernel():
    P = np.zeros((4, 4))
    P[0, 1] = P[1, 0] = 1.0
    P[2, 3] = P[3, 2] = 1.0
    sojourns = {k: Exponential(1.0) for k in [(0, 1), (1, 0), (2, 3), (3, 2)]}
    model = SemiMarkovModel(states=list(range(4)), P=P, sojourns=sojourns)
    assert not smiq.validate_model(model).ok


def test_stationary_embedded_fixed_point(ex1):
    model = ex1[0]
    mu = smiq.stationary_embedded(model)
    assert mu.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.abs(mu @ model.P - mu).max() < 1e-12
    assert np.all(mu > 0)


def test_stationary_time_weights_by_mean_sojourn():
    # equal kernel, sojourn means 1 and 3: time spends 3x longer in state 1
    model = alternation(mean0=1.0, mean1=3.0)
    pi = smiq.stationary_time(model)
    assert pi == pytest.approx([0.25, 0.75], abs=1e-12)


def test_mean_sojourn_mixes_over_successors():
    P = np.array([[0.0, 0.5, 0.5], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    sojourns = {
        (0, 1): Exponential(1.0),
        (0, 2): Exponential(4.0),
        (1, 0): Exponential(1.0),
        (2, 0): Exponential(1.0),
    }
    model = SemiMarkovModel(states=[0, 1, 2], P=P, sojourns=sojourns)
    assert smiq.mean_sojourn(model, 0) == pytest.approx(0.5 * 1.0 + 0.5 * 0.25)


def test_trajectory_covers_horizon_and_counts_segments():
    model = alternation()
    rng = smiq.stream_from_seed(11)
    traj = smiq.sample_trajectory(model, 1000.0, rng)
    assert traj.total_time == pytest.approx(1000.0, abs=1e-9)
    n = len(traj.states)
    # segment count is a renewal count with unit-mean gaps
    assert abs(n - 1000) < 5 * math.sqrt(1000)
    # states strictly alternate
    s = np.asarray(traj.states)
    assert np.all(s[1:] != s[:-1])


def test_occupation_fractions_converge(ex1):
    model, _ = ex1
    rng = smiq.stream_from_seed(12)
    traj = smiq.sample_trajectory(model, 2000.0, rng)
    occ = np.zeros(model.n_states)
    np.add.at(occ, np.asarray(traj.states), np.asarray(traj.durations))
    occ /= occ.sum()
    pi = smiq.stationary_time(model)
    assert np.abs(occ - pi).max() < 0.015


def test_residual_sampler_exponential_case():
    # every outgoing sojourn Exp(2): the residual mixture is again Exp(2)
    model = alternation(mean0=0.5, mean1=0.5)
    rng = smiq.stream_from_seed(13)
    draws = smiq.residual_sampler(model, 0, rng, size=20_000)
    k = smiq.ks_stat(draws, lambda x: expon.cdf(x, scale=0.5))
    assert k < 1.63 / math.sqrt(20_000)


def test_residual_sampler_mixture_tail():
    # two successors with different sojourn laws: the residual law mixes
    # their equilibrium transforms with weights P_jk m_jk / m_j
    P = np.array([[0.0, 0.5, 0.5], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    sojourns = {
        (0, 1): Exponential(1.0),
        (0, 2): Exponential(4.0),
        (1, 0): Exponential(1.0),
        (2, 0): Exponential(1.0),
    }
    model = SemiMarkovModel(states=[0, 1, 2], P=P, sojourns=sojourns)
    m0 = 0.5 * 1.0 + 0.5 * 0.25
    rng = smiq.stream_from_seed(14)
    n = 50_000
    draws = smiq.residual_sampler(model, 0, rng, size=n)
    for x in (0.1, 0.5, 1.0, 2.0):
        # equilibrium of Exp(r) is Exp(r), so the mixture tail is explicit
        p = (0.5 * 1.0 * math.exp(-x) + 0.5 * 0.25 * math.exp(-4 * x)) / m0
        emp = float(np.mean(draws > x))
        assert abs(emp - p) < 5 * math.sqrt(p * (1 - p) / n) + 1e-9


def test_decompose_cycles_round_trip(ex1):
    model, _ = ex1
    rng = smiq.stream_from_seed(15)
    traj = smiq.sample_trajectory(model, 50.0, rng)
    dec = smiq.decompose_cycles(traj, 2)
    pieces = [dec.pre_cycle] + dec.cycles + [dec.residual]
    states = np.concatenate([np.asarray(p.states) for p in pieces if len(p.states)])
    durs = np.concatenate([np.asarray(p.durations) for p in pieces if len(p.states)])
    assert np.array_equal(states, np.asarray(traj.states))
    assert np.allclose(durs, np.asarray(traj.durations))
    for cycle in dec.cycles:
        assert cycle.states[0] == 2
        assert 2 not in cycle.states[1:]


def test_cycle_length_matches_renewal_identity(ex1):
    # mean cycle duration at anchor j equals sum_k mu_k m_k / mu_j
    model, rates = ex1
    j = 2
    mu_emb = smiq.stationary_embedded(model)
    m = np.array([smiq.mean_sojourn(model, i) for i in range(model.n_states)])
    expected = float(mu_emb @ m / mu_emb[j])
    rng = smiq.stream_from_seed(16)
    _, _, lens = smiq.sample_cycle_data(model, rates, j, 20_000, rng)
    se = lens.std(ddof=1) / math.sqrt(lens.size)
    assert abs(lens.mean() - expected) < 5 * se


def test_model_json_round_trip(ex1):
    model = ex1[0]
    back = smiq.model_from_json(smiq.model_to_json(model))
    assert back.states == model.states
    assert np.allclose(back.P, model.P)
    assert set(back.sojourns) == set(model.sojourns)
    pi_a = smiq.stationary_time(model)
    pi_b = smiq.stationary_time(back)
    assert np.allclose(pi_a, pi_b)


def test_model_from_rule_builds_ladder():
    model = smiq.model_from_rule({"rule": "example2", "lambda": 1.0, "truncation": 10})
    assert model.n_states == 11
    assert smiq.validate_model(model).ok


def test_model_from_rule_rejects_unknown():
    with pytest.raises(ValueError):
        smiq.model_from_rule({"rule": "no_such_rule"})


@st.composite
def random_kernel(draw):
    k = draw(st.integers(2, 5))
    raw = draw(
        st.lists(
            st.lists(st.floats(0.05, 1.0), min_size=k, max_size=k),
            min_size=k,
            max_size=k,
        )
    )
    P = np.asarray(raw)
    np.fill_diagonal(P, 0.0)
    P /= P.sum(axis=1, keepdims=True)
    return P


@given(P=random_kernel())
@settings(max_examples=40, deadline=None)
def test_random_kernels_validate_and_have_stationary_law(P):
    k = P.shape[0]
    sojourns = {
        (i, j): Exponential(1.0) for i in range(k) for j in range(k) if P[i, j] > 0
    }
    model = SemiMarkovModel(states=list(range(k)), P=P, sojourns=sojourns)
    assert smiq.validate_model(model).ok
    mu = smiq.stationary_embedded(model)
    assert mu.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.abs(mu @ P - mu).max() < 1e-9
