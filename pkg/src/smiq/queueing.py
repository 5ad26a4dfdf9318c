"""Infinite-server queues driven by a semi-Markov environment.

While the environment sits in state ``i``, customers arrive at rate
``lam[i]`` and each customer present departs at rate ``mu[i]``.  Two
simulators are provided and must agree in distribution:

* ``simulate_conditional`` uses the exact conditional law of the count
  given the environment path: over a segment of length ``dt`` the count
  evolves as Binomial(y, exp(-mu dt)) survivors plus Poisson(g(mu, lam, dt))
  fresh arrivals still in service.
* ``simulate_gillespie`` runs the event-driven birth-death dynamics within
  each sojourn.

``simulate_feedback`` covers the two-server feedback variant where the
service rate depends on a bandwidth level that the queue itself degrades.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapExceededError
from .seeding import kernel_seed
from .semi_markov import SemiMarkovModel, Trajectory, sample_trajectory

__all__ = [
    "RateMap",
    "QueuePath",
    "FeedbackParams",
    "FeedbackPath",
    "g_function",
    "interval_update",
    "phi_and_i",
    "simulate_conditional",
    "simulate_gillespie",
    "terminal_counts_conditional",
    "terminal_counts_gillespie",
    "simulate_feedback",
    "growth_rate",
    "cycle_increments",
]

DEFAULT_EVENT_CAP = 100_000_000


@dataclass(eq=False)
class RateMap:
    """Arrival and service rates per environment state index."""

    lam: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=np.float64)
        self.mu = np.asarray(self.mu, dtype=np.float64)
        for name, arr in (("lam", self.lam), ("mu", self.mu)):
            if arr.ndim != 1:
                raise ValueError(f"{name} must be a 1-D array")
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError(f"{name} must be finite and nonnegative")
        if self.lam.shape != self.mu.shape:
            raise ValueError("lam and mu must have the same length")

    @classmethod
    def from_functions(cls, model: SemiMarkovModel, lam_fn, mu_fn) -> "RateMap":
        """Evaluate rate functions of the state label over a model's states."""
        return cls(
            lam=np.array([float(lam_fn(s)) for s in model.states]),
            mu=np.array([float(mu_fn(s)) for s in model.states]),
        )

    def mean_service(self, pi: np.ndarray) -> float:
        """Average service rate under a law pi on states."""
        return float(self.mu @ pi)


@dataclass(eq=False)
class QueuePath:
    """Recorded queue counts at increasing times, with the driving path."""

    times: np.ndarray
    counts: np.ndarray
    environment: Trajectory | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.times.shape != self.counts.shape or self.times.ndim != 1:
            raise ValueError("times and counts must be 1-D arrays of equal length")

    def to_csv(self, fh) -> None:
        fh.write("time,count\n")
        for t, y in zip(self.times, self.counts):
            # repr of a python float round-trips exactly, so files are
            # byte-stable across runs
            fh.write(f"{float(t)!r},{y}\n")


def g_function(c, d, x):
    """Integral of d * exp(-(x - s) c) over s in [0, x].

    Equals x * d when c is zero and (d / c)(1 - exp(-x c)) otherwise; the
    two branches join continuously as c -> 0.  Accepts scalars or arrays.
    """
    c_arr = np.asarray(c, dtype=np.float64)
    d_arr = np.asarray(d, dtype=np.float64)
    x_arr = np.asarray(x, dtype=np.float64)
    safe_c = np.where(c_arr == 0.0, 1.0, c_arr)
    general = d_arr / safe_c * -np.expm1(-x_arr * c_arr)
    out = np.where(c_arr == 0.0, x_arr * d_arr, general)
    if out.ndim == 0:
        return float(out)
    return out


def interval_update(
    y0: int, lam: float, mu: float, dt: float, rng: np.random.Generator
) -> int:
    """Exact one-step update of the count over a constant-rate interval.

    Survivors of the y0 initial customers are Binomial(y0, exp(-mu dt));
    arrivals during the interval still present at its end are
    Poisson(g(mu, lam, dt)).
    """
    if y0 < 0:
        raise ValueError(f"y0 must be nonnegative, got {y0}")
    if dt < 0:
        raise ValueError(f"dt must be nonnegative, got {dt}")
    if lam < 0 or mu < 0 or not (math.isfinite(lam) and math.isfinite(mu)):
        raise ValueError(f"rates must be finite and nonnegative, got {lam}, {mu}")
    survivors = rng.binomial(y0, math.exp(-mu * dt)) if y0 > 0 else 0
    return int(survivors + rng.poisson(g_function(mu, lam, dt)))


def phi_and_i(traj: Trajectory, rates: RateMap) -> tuple[float, float]:
    """Survival factor and accumulated intensity over a whole trajectory.

    phi = exp(-int mu), the chance an initial customer is still present at
    the end; i = int lam(s) exp(-int_s^T mu), the conditional mean number
    of later arrivals still present.  The discounting of each segment by
    everything after it is accumulated in a single reverse pass.
    """
    mus = rates.mu[traj.states]
    lams = rates.lam[traj.states]
    mass = mus * traj.durations
    total = mass.sum()
    after = total - np.cumsum(mass)  # after[k] = mass of segments beyond k
    g = g_function(mus, lams, traj.durations)
    i_val = float(np.sum(np.exp(-after) * g))
    return float(np.exp(-total)), i_val


def simulate_conditional(
    traj: Trajectory,
    rates: RateMap,
    y0: int,
    rng: np.random.Generator,
    record_grid: float | None = None,
) -> QueuePath:
    """Simulate the count along a given environment path.

    Applies :func:`interval_update` across each segment, recording the
    count at time 0 and at every segment boundary.  ``record_grid`` adds
    records at multiples of that spacing; splitting segments this way does
    not change the law of the path at the recorded times.
    """
    if record_grid is not None and record_grid <= 0:
        raise ValueError("record_grid must be positive")
    times = [0.0]
    counts = [int(y0)]
    y = int(y0)
    t = 0.0
    next_grid = record_grid if record_grid is not None else math.inf
    for s, dur in zip(traj.states, traj.durations):
        lam_s = float(rates.lam[s])
        mu_s = float(rates.mu[s])
        seg_end = t + dur
        while next_grid < seg_end:
            y = interval_update(y, lam_s, mu_s, next_grid - t, rng)
            t = next_grid
            times.append(t)
            counts.append(y)
            next_grid += record_grid
        y = interval_update(y, lam_s, mu_s, seg_end - t, rng)
        t = seg_end
        if next_grid == t:
            next_grid += record_grid
        times.append(t)
        counts.append(y)
    return QueuePath(np.array(times), np.array(counts), environment=traj)


def simulate_gillespie(
    model: SemiMarkovModel,
    rates: RateMap,
    y0: int,
    horizon: float,
    rng: np.random.Generator,
    event_cap: int = DEFAULT_EVENT_CAP,
) -> QueuePath:
    """Event-driven simulation of the queue and its environment.

    Records the count at 0, at every arrival or departure, and at the
    horizon.  Raises :class:`CapExceededError` after ``event_cap`` queue
    events.
    """
    if horizon < 0:
        raise ValueError(f"horizon must be nonnegative, got {horizon}")
    init_cum = np.cumsum(model.initial)
    P_cum = np.cumsum(model.P, axis=1)
    i = min(int(np.searchsorted(init_cum, rng.random(), side="right")), model.n_states - 1)
    y = int(y0)
    t = 0.0
    times = [0.0]
    counts = [y]
    env_states: list[int] = []
    env_durs: list[float] = []
    events = 0
    while t < horizon:
        j = min(int(np.searchsorted(P_cum[i], rng.random(), side="right")), model.n_states - 1)
        length = float(model.sojourns[(i, j)].sample(rng))
        seg_start = t
        seg_end = seg_start + length
        final = seg_end >= horizon
        if final:
            seg_end = horizon
        lam_i = float(rates.lam[i])
        mu_i = float(rates.mu[i])
        while True:
            total = lam_i + y * mu_i
            if total <= 0.0:
                t = seg_end
                break
            dt = rng.exponential(1.0 / total)
            if t + dt >= seg_end:
                t = seg_end
                break
            t += dt
            events += 1
            if events > event_cap:
                raise CapExceededError(f"simulation exceeded the event cap of {event_cap}")
            if rng.random() * total < lam_i:
                y += 1
            else:
                y -= 1
            times.append(t)
            counts.append(y)
        env_states.append(i)
        env_durs.append(seg_end - seg_start)
        if final:
            break
        i = j
    if not env_states:
        env_states, env_durs = [i], [0.0]
    if times[-1] != horizon:
        times.append(horizon)
        counts.append(y)
    env = Trajectory(np.array(env_states), np.array(env_durs))
    return QueuePath(np.array(times), np.array(counts), environment=env)


def terminal_counts_conditional(
    model: SemiMarkovModel,
    rates: RateMap,
    y0: int,
    horizon: float,
    reps: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Terminal counts of ``reps`` independent conditional simulations.

    Batch analogue of running :func:`simulate_conditional` on ``reps``
    fresh trajectories and keeping the final count of each; returns
    (counts, end states).  Requires built-in sojourn families.
    """
    from . import kernels

    tables = kernels.pack_tables(model, rates.lam, rates.mu)
    seed = kernel_seed(rng)
    phi, dacc, end_state = kernels.env_terminal(
        tables.P_cum,
        tables.kind,
        tables.param,
        tables.lam,
        tables.mu,
        tables.init_cum,
        float(horizon),
        int(reps),
        seed,
    )
    counts = rng.binomial(int(y0), phi) + rng.poisson(dacc)
    return counts.astype(np.int64), end_state


def terminal_counts_gillespie(
    model: SemiMarkovModel,
    rates: RateMap,
    y0: int,
    horizon: float,
    reps: int,
    rng: np.random.Generator,
    event_cap: int = DEFAULT_EVENT_CAP,
) -> tuple[np.ndarray, np.ndarray]:
    """Terminal counts of ``reps`` independent event-driven simulations."""
    from . import kernels

    tables = kernels.pack_tables(model, rates.lam, rates.mu)
    seed = kernel_seed(rng)
    counts, failures = kernels.gillespie_terminal(
        tables.P_cum,
        tables.kind,
        tables.param,
        tables.lam,
        tables.mu,
        tables.init_cum,
        float(horizon),
        int(y0),
        int(reps),
        seed,
        int(event_cap),
    )
    if failures:
        raise CapExceededError(
            f"{failures} of {reps} replications exceeded the event cap of {event_cap}"
        )
    end_state = np.full(reps, -1, dtype=np.int64)
    return counts, end_state


@dataclass(frozen=True)
class FeedbackParams:
    """Two-server feedback system parameters.

    Server 1 serves while x1 = 0 at per-customer rate q1 * x2; server 2
    serves while x1 = 1 at rate q2 * x2.  Switches happen at rate lam0
    (away from server 1) and lam1 (away from server 2) and reset the
    bandwidth level x2 to k - x2.  Every departure degrades x2 by one, so
    long stays exhaust the active server's bandwidth.
    """

    lam: float
    lam0: float
    lam1: float
    q1: float
    q2: float
    k: int

    def __post_init__(self):
        for name in ("lam", "lam0", "lam1", "q1", "q2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")


@dataclass(eq=False)
class FeedbackPath:
    """Event-time record of (x1, x2, count) for the feedback system."""

    times: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    counts: np.ndarray

    def to_csv(self, fh) -> None:
        fh.write("time,x1,x2,count\n")
        for t, a, b, y in zip(self.times, self.x1, self.x2, self.counts):
            fh.write(f"{float(t)!r},{a},{b},{y}\n")


def simulate_feedback(
    params: FeedbackParams,
    y0: int,
    horizon: float,
    rng: np.random.Generator,
    event_cap: int = DEFAULT_EVENT_CAP,
) -> FeedbackPath:
    """Simulate the feedback system from (x1, x2, y) = (0, k, y0).

    Competing exponential clocks: arrival at rate lam, server switch at
    rate lam0 or lam1 depending on the active server, and departure at
    rate (q1 or q2) * x2 * y.  Records the state after every event.
    """
    if horizon < 0:
        raise ValueError(f"horizon must be nonnegative, got {horizon}")
    x1, x2, y = 0, params.k, int(y0)
    t = 0.0
    times = [0.0]
    c_x1 = [x1]
    c_x2 = [x2]
    c_y = [y]
    events = 0
    while True:
        switch_rate = params.lam0 if x1 == 0 else params.lam1
        dep_rate = (params.q1 if x1 == 0 else params.q2) * x2 * y
        total = params.lam + switch_rate + dep_rate
        dt = rng.exponential(1.0 / total)
        if t + dt >= horizon:
            break
        t += dt
        events += 1
        if events > event_cap:
            raise CapExceededError(f"simulation exceeded the event cap of {event_cap}")
        u = rng.random() * total
        if u < params.lam:
            y += 1
        elif u < params.lam + switch_rate:
            x1 = 1 - x1
            x2 = params.k - x2
        else:
            x2 -= 1
            y -= 1
        times.append(t)
        c_x1.append(x1)
        c_x2.append(x2)
        c_y.append(y)
    times.append(horizon)
    c_x1.append(x1)
    c_x2.append(x2)
    c_y.append(y)
    return FeedbackPath(
        np.array(times),
        np.array(c_x1, dtype=np.int64),
        np.array(c_x2, dtype=np.int64),
        np.array(c_y, dtype=np.int64),
    )


def growth_rate(path) -> float:
    """Least-squares slope of counts against times over the later half.

    The half is taken in time: records with t >= t_end / 2.  A constant
    count gives exactly zero.
    """
    times = np.asarray(path.times, dtype=np.float64)
    counts = np.asarray(path.counts, dtype=np.float64)
    mask = times >= times[-1] / 2.0
    t = times[mask]
    y = counts[mask]
    if t.size < 2 or t[-1] == t[0]:
        raise ValueError("need at least two distinct record times in the later half")
    t_c = t - t.mean()
    y_c = y - y.mean()
    return float((t_c @ y_c) / (t_c @ t_c))


def cycle_increments(path: FeedbackPath) -> np.ndarray:
    """Count increments between consecutive activations of server 2.

    Regeneration instants are the events where x1 flips from 0 to 1; the
    returned array holds the change in the count over each completed
    inter-activation interval.
    """
    x1 = path.x1
    entries = np.nonzero((x1[1:] == 1) & (x1[:-1] == 0))[0] + 1
    if entries.size < 2:
        return np.empty(0, dtype=np.int64)
    y_at = path.counts[entries]
    return np.diff(y_at)
