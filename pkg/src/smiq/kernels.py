"""Compiled batch engines for the heavy Monte Carlo loops.

Each work item (replication, cycle, draw) consumes its own splitmix64
counter stream keyed by (seed, item index), so results do not depend on how
items are scheduled and a given seed always reproduces the same output.
Only the built-in sojourn families are supported here; models with Custom
sojourns take the pure-Python paths in the calling modules.

Sojourn codes in the packed tables: 0 = exponential (param is the rate),
1 = shifted Pareto (param is the shape).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .distributions import Exponential, ShiftedPareto
from .errors import UnsupportedOperationError

__all__ = ["ModelTables", "pack_tables", "KIND_EXP", "KIND_PARETO"]

KIND_EXP = 0
KIND_PARETO = 1

_U64 = np.uint64
_GOLD = _U64(0x9E3779B97F4A7C15)
_MIX_A = _U64(0xBF58476D1CE4E5B9)
_MIX_B = _U64(0x94D049BB133111EB)
_STREAM_SALT = _U64(0xD6E8FEB86659FD93)
_S30, _S27, _S31, _S11 = _U64(30), _U64(27), _U64(31), _U64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@dataclass(frozen=True)
class ModelTables:
    """Numeric form of a model plus rate maps, ready for the kernels."""

    P_cum: np.ndarray
    kind: np.ndarray
    param: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    init_cum: np.ndarray


def pack_tables(model, lam: np.ndarray, mu: np.ndarray) -> ModelTables:
    """Flatten a model with built-in sojourn laws into kernel tables."""
    K = model.n_states
    kind = np.zeros((K, K), dtype=np.int64)
    param = np.ones((K, K), dtype=np.float64)
    for (i, j), dist in model.sojourns.items():
        if model.P[i, j] <= 0:
            continue
        if isinstance(dist, Exponential):
            kind[i, j] = KIND_EXP
            param[i, j] = dist.rate
        elif isinstance(dist, ShiftedPareto):
            kind[i, j] = KIND_PARETO
            param[i, j] = dist.shape
        else:
            raise UnsupportedOperationError(
                f"batch kernels support exponential and shifted-Pareto sojourns; "
                f"transition ({i}, {j}) uses {type(dist).__name__}"
            )
    return ModelTables(
        P_cum=np.cumsum(model.P, axis=1),
        kind=kind,
        param=param,
        lam=np.asarray(lam, dtype=np.float64),
        mu=np.asarray(mu, dtype=np.float64),
        init_cum=np.cumsum(model.initial),
    )


@njit(cache=True, inline="always")
def _mix(z):
    z ^= z >> _S30
    z *= _MIX_A
    z ^= z >> _S27
    z *= _MIX_B
    z ^= z >> _S31
    return z


@njit(cache=True, inline="always")
def _stream(seed, item):
    return _mix(_mix(seed) ^ (_U64(item) * _STREAM_SALT))


@njit(cache=True, inline="always")
def _u01(state):
    # strictly inside (0, 1) so logs and inverse CDFs are always safe
    state += _GOLD
    z = _mix(state)
    return (np.float64(z >> _S11) + 0.5) * _INV53, state


@njit(cache=True, inline="always")
def _pick(cum_row, u):
    j = 0
    last = cum_row.shape[0] - 1
    while j < last and cum_row[j] < u:
        j += 1
    return j


@njit(cache=True, inline="always")
def _sojourn(kind, param, u):
    if kind == KIND_EXP:
        return -math.log(u) / param
    return math.pow(u, -1.0 / param) - 1.0


@njit(cache=True, inline="always")
def _gfun(c, d, x):
    if c == 0.0:
        return x * d
    return d / c * -math.expm1(-x * c)


@njit(cache=True)
def env_terminal(P_cum, kind, param, lam, mu, init_cum, horizon, reps, seed):
    """Survival factor, accumulated intensity, and end state at the horizon.

    Per replication: walk the environment to the horizon (final sojourn
    truncated) and fold the per-segment decay c = exp(-mu dt) and inflow
    d = g(mu, lam, dt) into (phi, dacc) so that the terminal queue length
    given the path is Binomial(y0, phi) + Poisson(dacc).
    """
    out_phi = np.empty(reps)
    out_d = np.empty(reps)
    out_state = np.empty(reps, dtype=np.int64)
    for rep in range(reps):
        state = _stream(seed, rep)
        u, state = _u01(state)
        i = _pick(init_cum, u)
        left = horizon
        phi = 1.0
        dacc = 0.0
        while True:
            u, state = _u01(state)
            j = _pick(P_cum[i], u)
            u, state = _u01(state)
            length = _sojourn(kind[i, j], param[i, j], u)
            seg = length if length < left else left
            c = math.exp(-mu[i] * seg)
            dacc = dacc * c + _gfun(mu[i], lam[i], seg)
            phi *= c
            left -= length
            if left <= 0.0:
                out_phi[rep] = phi
                out_d[rep] = dacc
                out_state[rep] = i
                break
            i = j
    return out_phi, out_d, out_state


@njit(cache=True)
def gillespie_terminal(
    P_cum, kind, param, lam, mu, init_cum, horizon, y0, reps, seed, event_cap
):
    """Terminal queue length by event-driven simulation.

    Within each environment sojourn the queue is a birth-death process with
    birth rate lam[i] and death rate y * mu[i]; events compete with the end
    of the sojourn.  Returns counts and the number of replications that hit
    the event cap (their entries are -1).
    """
    out = np.empty(reps, dtype=np.int64)
    failures = 0
    for rep in range(reps):
        state = _stream(seed, rep)
        u, state = _u01(state)
        i = _pick(init_cum, u)
        y = y0
        t = 0.0
        events = 0
        ok = True
        while ok:
            u, state = _u01(state)
            j = _pick(P_cum[i], u)
            u, state = _u01(state)
            length = _sojourn(kind[i, j], param[i, j], u)
            seg_end = t + length
            final = seg_end >= horizon
            if final:
                seg_end = horizon
            while True:
                total = lam[i] + y * mu[i]
                if total <= 0.0:
                    t = seg_end
                    break
                u, state = _u01(state)
                dt = -math.log(u) / total
                if t + dt >= seg_end:
                    t = seg_end
                    break
                t += dt
                events += 1
                if events > event_cap:
                    ok = False
                    break
                u, state = _u01(state)
                if u * total < lam[i]:
                    y += 1
                else:
                    y -= 1
            if final or not ok:
                break
            i = j
        out[rep] = y if ok else -1
        if not ok:
            failures += 1
    return out, failures


@njit(cache=True, inline="always")
def _one_cycle(anchor, state, P_cum, kind, param, lam, mu, step_cap):
    """One fresh regeneration cycle at the anchor.

    Returns the survival factor c over the cycle, the accumulated inflow d
    (inflow from each segment discounted by the decay of all later
    segments), the cycle duration, the advanced stream state, and a success
    flag (0 when the step cap was hit before returning to the anchor).
    """
    i = anchor
    c_acc = 1.0
    d_acc = 0.0
    dur = 0.0
    steps = 0
    while True:
        u, state = _u01(state)
        k = _pick(P_cum[i], u)
        u, state = _u01(state)
        length = _sojourn(kind[i, k], param[i, k], u)
        c = math.exp(-mu[i] * length)
        d_acc = d_acc * c + _gfun(mu[i], lam[i], length)
        c_acc *= c
        dur += length
        steps += 1
        if k == anchor:
            return c_acc, d_acc, dur, state, 1
        if steps >= step_cap:
            return c_acc, d_acc, dur, state, 0
        i = k


@njit(cache=True)
def cycle_pairs(P_cum, kind, param, lam, mu, anchor, n, seed, step_cap):
    """n independent regeneration cycles at the anchor, one stream each."""
    out_c = np.empty(n)
    out_d = np.empty(n)
    out_len = np.empty(n)
    failures = 0
    for idx in range(n):
        state = _stream(seed, idx)
        c, d, dur, state, ok = _one_cycle(
            anchor, state, P_cum, kind, param, lam, mu, step_cap
        )
        out_c[idx] = c
        out_d[idx] = d
        out_len[idx] = dur
        failures += 1 - ok
    return out_c, out_d, out_len, failures


@njit(cache=True)
def v_draws(P_cum, kind, param, lam, mu, anchor, depth, v0, n, seed, step_cap):
    """n draws of the depth-step affine recursion v <- c v + d at the anchor.

    Each draw folds ``depth`` fresh cycles starting from v0.
    """
    out = np.empty(n)
    failures = 0
    for idx in range(n):
        state = _stream(seed, idx)
        v = v0
        for _ in range(depth):
            c, d, dur, state, ok = _one_cycle(
                anchor, state, P_cum, kind, param, lam, mu, step_cap
            )
            if ok == 0:
                failures += 1
                break
            v = c * v + d
        out[idx] = v
    return out, failures


@njit(cache=True)
def w_draws(
    P_cum,
    kind,
    param,
    lam,
    mu,
    anchor,
    res_cum,
    depth,
    v0,
    n,
    seed,
    step_cap,
):
    """n draws of the limiting conditional intensity at the anchor state.

    Per draw: a stationary residual sojourn T at the anchor (size-biased
    successor pick from res_cum, then an equilibrium draw from that
    transition's law), an independent depth-step recursion value v, and the
    combination g(mu_j, lam_j, T) + exp(-mu_j T) v.
    """
    out = np.empty(n)
    failures = 0
    mu_j = mu[anchor]
    lam_j = lam[anchor]
    for idx in range(n):
        state = _stream(seed, idx)
        u, state = _u01(state)
        k = _pick(res_cum, u)
        u, state = _u01(state)
        if kind[anchor, k] == KIND_EXP:
            t = -math.log(u) / param[anchor, k]
        else:
            # equilibrium of a shifted Pareto drops the shape by one
            t = math.pow(u, -1.0 / (param[anchor, k] - 1.0)) - 1.0
        v = v0
        for _ in range(depth):
            c, d, dur, state, ok = _one_cycle(
                anchor, state, P_cum, kind, param, lam, mu, step_cap
            )
            if ok == 0:
                failures += 1
                break
            v = c * v + d
        out[idx] = _gfun(mu_j, lam_j, t) + math.exp(-mu_j * t) * v
    return out, failures
