"""Regeneration-cycle pairs and the affine stochastic recursion they drive.

Fix an anchor state j.  Over one regeneration cycle (from one entry into j
to the next) the queue's conditional intensity transforms affinely: it is
multiplied by C = exp(-int mu over the cycle) and incremented by
D = int lam(s) exp(-int_s^end mu), the inflow discounted to the cycle end.
Independent cycles give i.i.d. pairs (C_i, D_i), and the recursion
v <- C v + D converges in distribution to the perpetuity V solving
V =d C V + D with V independent of (C, D).

The distance from the n-step recursion to V decays like a1 * exp(-r n)
with a1 and r estimable from the pairs themselves, which is what lets a
sampler pick n for a target accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .errors import CapExceededError, MomentConditionError, UnsupportedOperationError
from .queueing import RateMap, phi_and_i
from .semi_markov import SemiMarkovModel, Trajectory, decompose_cycles
from .seeding import kernel_seed

__all__ = [
    "CyclePair",
    "SreDiagnostics",
    "cycle_functionals",
    "sample_cycle",
    "sample_cycle_data",
    "sample_cycles",
    "pairs_from_trajectory",
    "pairs_to_csv",
    "forward_recursion",
    "estimate_constants",
    "choose_n",
]


class CyclePair(NamedTuple):
    """Multiplier and increment of one regeneration cycle."""

    c: float
    d: float


@dataclass(frozen=True)
class SreDiagnostics:
    """Sample summaries of cycle pairs at one anchor state.

    ``a1`` and ``r`` parameterize the convergence bound a1 * exp(-r n) on
    the distance between the n-step recursion and its limit; the log
    summaries are plug-in proxies for the existence conditions
    E[log C] < 0 and E[log+ D] < infinity.
    """

    mean_c: float
    mean_d: float
    a1: float
    r: float
    mean_log_c: float
    mean_log_plus_d: float


def cycle_functionals(cycle: Trajectory, rates: RateMap) -> CyclePair:
    """The (C, D) pair of one cycle, accumulated in a single reverse pass."""
    phi, inflow = phi_and_i(cycle, rates)
    return CyclePair(c=phi, d=inflow)


def sample_cycle(
    model: SemiMarkovModel,
    j: int,
    rng: np.random.Generator,
    step_cap: int = 1_000_000,
) -> Trajectory:
    """One fresh regeneration cycle: from an entry into j back to j."""
    P_cum = np.cumsum(model.P, axis=1)
    states: list[int] = []
    durations: list[float] = []
    i = j
    while True:
        if len(states) >= step_cap:
            raise CapExceededError(
                f"cycle at state {j} exceeded the step cap of {step_cap}; "
                "the anchor may not be positive recurrent"
            )
        u = rng.random()
        k = min(int(np.searchsorted(P_cum[i], u, side="right")), model.n_states - 1)
        states.append(i)
        durations.append(float(model.sojourns[(i, k)].sample(rng)))
        if k == j:
            return Trajectory(np.array(states), np.array(durations))
        i = k


def sample_cycle_data(
    model: SemiMarkovModel,
    rates: RateMap,
    j: int,
    n: int,
    rng: np.random.Generator,
    step_cap: int = 1_000_000,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(c, d, duration) arrays of n independent cycles at anchor j.

    Uses the compiled walker for built-in sojourn families and falls back
    to the pure-Python cycle sampler otherwise.
    """
    if n < 1:
        raise ValueError(f"need at least one cycle, got n={n}")
    try:
        from . import kernels

        tables = kernels.pack_tables(model, rates.lam, rates.mu)
    except UnsupportedOperationError:
        tables = None
    if tables is None:
        c = np.empty(n)
        d = np.empty(n)
        lens = np.empty(n)
        for idx in range(n):
            cycle = sample_cycle(model, j, rng, step_cap=step_cap)
            pair = cycle_functionals(cycle, rates)
            c[idx], d[idx] = pair.c, pair.d
            lens[idx] = cycle.total_time
        return c, d, lens
    from . import kernels

    c, d, lens, failures = kernels.cycle_pairs(
        tables.P_cum,
        tables.kind,
        tables.param,
        tables.lam,
        tables.mu,
        int(j),
        int(n),
        kernel_seed(rng),
        int(step_cap),
    )
    if failures:
        raise CapExceededError(
            f"{failures} of {n} cycles at state {j} exceeded the step cap of {step_cap}"
        )
    return c, d, lens


def sample_cycles(
    model: SemiMarkovModel,
    rates: RateMap,
    j: int,
    n: int,
    rng: np.random.Generator,
    step_cap: int = 1_000_000,
) -> list[CyclePair]:
    """n independent cycle pairs at anchor j."""
    c, d, _ = sample_cycle_data(model, rates, j, n, rng, step_cap=step_cap)
    return [CyclePair(float(ci), float(di)) for ci, di in zip(c, d)]


def pairs_to_csv(pairs: Iterable[CyclePair], fh) -> None:
    """Write pairs as a c,d CSV for external diagnostics."""
    fh.write("c,d\n")
    for c, d in pairs:
        fh.write(f"{float(c)!r},{float(d)!r}\n")


def pairs_from_trajectory(
    traj: Trajectory, j: int, rates: RateMap
) -> list[CyclePair]:
    """Cycle pairs chopped out of one long trajectory.

    Only completed cycles count; the stretch before the first entry into j
    and the partial stretch after the last one are dropped.  Pairs from a
    single path are identically distributed but not independent, so prefer
    :func:`sample_cycles` except when checking that both routes agree.
    """
    decomposition = decompose_cycles(traj, j)
    return [cycle_functionals(cycle, rates) for cycle in decomposition.cycles]


def forward_recursion(pairs, v0: float = 0.0) -> float:
    """Fold the affine recursion v <- c v + d over pairs in order."""
    v = float(v0)
    for c, d in pairs:
        v = c * v + d
    return v


def estimate_constants(
    pairs, e_pi_lambda: float, mean_cycle_len: float
) -> SreDiagnostics:
    """Plug-in convergence constants from sampled cycle pairs.

    a1 = e_pi_lambda * mean_cycle_len / (1 - mean_c) dominates the mean of
    the perpetuity's tail terms and r = -log(mean_c) is the geometric
    decay exponent.  Fails when mean_c >= 1, which happens exactly when
    the service rate never accumulates over cycles.
    """
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise ValueError("pairs must be a nonempty sequence of (c, d) pairs")
    c = arr[:, 0]
    d = arr[:, 1]
    if np.any(c < 0) or np.any(c > 1.0 + 1e-12):
        raise ValueError("cycle multipliers must lie in [0, 1]")
    mean_c = float(c.mean())
    if mean_c >= 1.0:
        raise MomentConditionError(
            "mean cycle multiplier is 1; the service rate never accumulates, "
            "so the recursion does not contract"
        )
    with np.errstate(divide="ignore"):
        mean_log_c = float(np.mean(np.log(c)))
    # long cycles can underflow every multiplier to 0.0; the recursion then
    # forgets its past within a single cycle, so the decay rate is infinite
    r = math.inf if mean_c == 0.0 else -math.log(mean_c)
    return SreDiagnostics(
        mean_c=mean_c,
        mean_d=float(d.mean()),
        a1=float(e_pi_lambda) * float(mean_cycle_len) / (1.0 - mean_c),
        r=r,
        mean_log_c=mean_log_c,
        mean_log_plus_d=float(np.mean(np.log(np.maximum(d, 1.0)))),
    )


def choose_n(diag: SreDiagnostics, epsilon: float) -> int:
    """Smallest recursion depth whose error bound a1 exp(-r n) is below epsilon."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if diag.a1 <= epsilon:
        return 1
    return max(1, math.ceil(math.log(diag.a1 / epsilon) / diag.r))
