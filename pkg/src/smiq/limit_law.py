"""Exact sampling from the long-run law of the modulated queue.

As t grows, the pair (count, environment state) converges in law to
(Poisson(W_J), J) where J follows the time-stationary law of the
environment and, given J = j, the conditional intensity W_j solves a
distributional fixed point: W_j combines the stationary residual sojourn
at j with a perpetuity V_j satisfying V =d C V + D over regeneration
cycles at j.  V_j has no closed form in general but the affine recursion
v <- c v + d over fresh cycle pairs converges geometrically, with an
explicit bound on the error after n steps, so the depth needed for any
target accuracy can be chosen up front.

The same cycle pairs drive exact moment recursions for V_j, moments of the
mixture law via Stirling numbers, and tail-probability estimation for the
count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.stats import poisson

from .errors import CapExceededError, MomentConditionError, UnsupportedOperationError
from .perpetuity import (
    SreDiagnostics,
    choose_n,
    estimate_constants,
    forward_recursion,
    sample_cycle_data,
    sample_cycles,
)
from .queueing import RateMap, g_function
from .seeding import kernel_seed
from .semi_markov import (
    SemiMarkovModel,
    residual_sampler,
    stationary_embedded,
    stationary_time,
    validate_model,
)

__all__ = [
    "LimitLawSampler",
    "MomentTable",
    "stirling2",
    "sre_moments",
    "sre_moments_analytic",
    "limit_moment",
    "moment_table",
    "exceedance",
]

_STIRLING_MAX = 64


@lru_cache(maxsize=None)
def _stirling_row(n: int) -> tuple[int, ...]:
    if n == 0:
        return (1,)
    prev = _stirling_row(n - 1)
    row = [0] * (n + 1)
    for k in range(1, n + 1):
        above = prev[k] if k < n else 0
        row[k] = k * above + prev[k - 1]
    return tuple(row)


def stirling2(n: int, k: int) -> int:
    """Stirling number of the second kind, exact integer arithmetic.

    Counts the partitions of n items into k nonempty blocks; these convert
    falling-factorial moments into raw moments.  Supported for
    0 <= k <= n <= 64.
    """
    if not (0 <= k <= n <= _STIRLING_MAX):
        raise ValueError(f"need 0 <= k <= n <= {_STIRLING_MAX}, got n={n}, k={k}")
    return _stirling_row(n)[k]


def _pairs_to_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise ValueError("pairs must be a nonempty sequence of (c, d) pairs")
    return arr[:, 0], arr[:, 1]


def _check_moment_condition(c: np.ndarray, order: int) -> float:
    """Plug-in check that E[C^order] < 1 with a 3-standard-error margin."""
    powers = c**order
    mean = powers.mean()
    se = powers.std(ddof=1) / math.sqrt(powers.size) if powers.size > 1 else 0.0
    if mean + 3 * se >= 1.0:
        raise MomentConditionError(
            f"cannot certify E[C^{order}] < 1: estimate {mean:.6g} with se {se:.2g}"
        )
    return mean


def sre_moments(pairs, l_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Moments of the perpetuity V =d C V + D from sampled cycle pairs.

    Solves the triangular recursion
    m_l = (1 - E[C^l])^{-1} sum_{k<l} binom(l,k) E[C^k D^{l-k}] m_k,
    m_0 = 1, with plug-in sample cross-moments.  Returns (moments,
    standard errors), the latter from the delta method through the full
    recursion.  Raises :class:`MomentConditionError` when some E[C^l] < 1
    cannot be certified at 3 standard errors.
    """
    if l_max < 1:
        raise ValueError(f"l_max must be at least 1, got {l_max}")
    c, d = _pairs_to_arrays(pairs)
    n = c.size

    keys = sorted({(k, l - k) for l in range(1, l_max + 1) for k in range(l + 1)})
    key_pos = {key: idx for idx, key in enumerate(keys)}
    stats = np.empty((n, len(keys)))
    for (a, b), idx in key_pos.items():
        stats[:, idx] = c**a * d**b
    means = stats.mean(axis=0)
    cov = np.cov(stats, rowvar=False, ddof=1) / n if n > 1 else np.zeros((len(keys),) * 2)
    cov = np.atleast_2d(cov)

    for l in range(1, l_max + 1):
        _check_moment_condition(c, l)

    m = np.zeros(l_max + 1)
    m[0] = 1.0
    grads = [np.zeros(len(keys))]
    for l in range(1, l_max + 1):
        denom = 1.0 - means[key_pos[(l, 0)]]
        total = 0.0
        grad = np.zeros(len(keys))
        for k in range(l):
            coeff = math.comb(l, k)
            cross = means[key_pos[(k, l - k)]]
            total += coeff * cross * m[k]
            grad[key_pos[(k, l - k)]] += coeff * m[k]
            grad += coeff * cross * grads[k]
        m[l] = total / denom
        grad /= denom
        grad[key_pos[(l, 0)]] += m[l] / denom
        grads.append(grad)

    se = np.zeros(l_max + 1)
    for l in range(1, l_max + 1):
        se[l] = math.sqrt(max(float(grads[l] @ cov @ grads[l]), 0.0))
    return m, se


def sre_moments_analytic(cross_moment, l_max: int) -> np.ndarray:
    """Same recursion with exact cross-moments E[C^k D^s] = cross_moment(k, s)."""
    if l_max < 1:
        raise ValueError(f"l_max must be at least 1, got {l_max}")
    m = np.zeros(l_max + 1)
    m[0] = 1.0
    for l in range(1, l_max + 1):
        ecl = cross_moment(l, 0)
        if ecl >= 1.0:
            raise MomentConditionError(f"E[C^{l}] = {ecl} is not below 1")
        m[l] = sum(
            math.comb(l, k) * cross_moment(k, l - k) * m[k] for k in range(l)
        ) / (1.0 - ecl)
    return m


@dataclass(eq=False)
class LimitLawSampler:
    """Sampler for the limiting (count, state) law of a modulated queue.

    Built once per (model, rates).  Per-state work (contraction
    diagnostics from fresh regeneration cycles, the recursion depth that
    pushes the truncation bound below ``epsilon``, and the plug-in warm
    start for the recursion, which makes it exact at the fixed point when
    rates are constant) is materialized lazily the first time a state is
    actually drawn: in models with strongly unbalanced stationary mass the
    rare states have regeneration cycles too long to sample eagerly, and
    they essentially never come up.  Each state's diagnostics come from
    its own counter-jumped stream keyed at build time, so results do not
    depend on the order states are first touched.
    """

    model: SemiMarkovModel
    rates: RateMap
    pi: np.ndarray
    e_pi_lambda: float
    depths: np.ndarray
    v0: np.ndarray
    diagnostics: list[SreDiagnostics | None]
    mean_cycle_lengths: np.ndarray
    epsilon: float
    step_cap: int = 1_000_000
    diag_cycles: int = 10_000
    depth_override: int | None = None
    # per-state diagnostic effort is sized so that the expected number of
    # environment jumps spent on one state stays near this budget
    diag_step_budget: int = 30_000_000
    # a state whose expected cycle length in jumps exceeds this is treated
    # as unusable for anchoring (its mean return time is astronomical)
    cycle_step_ceiling: int = 100_000_000
    _tables: object | None = field(default=None, repr=False)
    _res_cum: np.ndarray | None = field(default=None, repr=False)
    _mu_emb: np.ndarray | None = field(default=None, repr=False)
    _state_caps: np.ndarray | None = field(default=None, repr=False)
    _diag_key: int = field(default=0, repr=False)

    @classmethod
    def build(
        cls,
        model: SemiMarkovModel,
        rates: RateMap,
        rng: np.random.Generator,
        epsilon: float = 1e-6,
        diag_cycles: int = 10_000,
        depth_override: int | None = None,
        step_cap: int = 1_000_000,
    ) -> "LimitLawSampler":
        report = validate_model(model)
        if not report.ok:
            raise ValueError(f"model failed validation:\n{report.summary()}")
        if rates.lam.size != model.n_states:
            raise ValueError("rate map length does not match the model")
        pi = stationary_time(model)
        if rates.mean_service(pi) <= 0.0:
            raise ValueError(
                "mean service rate under the time-stationary law must be positive"
            )
        e_pi_lambda = float(rates.lam @ pi)
        mu_emb = stationary_embedded(model)

        K = model.n_states
        try:
            from . import kernels

            tables = kernels.pack_tables(model, rates.lam, rates.mu)
        except UnsupportedOperationError:
            tables = None

        res_cum = None
        if tables is not None:
            res_cum = np.zeros((K, K))
            for j in range(K):
                row = model.P[j]
                weights = np.array(
                    [
                        row[k] * model.sojourns[(j, int(k))].mean() if row[k] > 0 else 0.0
                        for k in range(K)
                    ]
                )
                res_cum[j] = np.cumsum(weights / weights.sum())

        return cls(
            model=model,
            rates=rates,
            pi=pi,
            e_pi_lambda=e_pi_lambda,
            depths=np.zeros(K, dtype=np.int64),
            v0=np.zeros(K),
            diagnostics=[None] * K,
            mean_cycle_lengths=np.zeros(K),
            epsilon=epsilon,
            step_cap=step_cap,
            diag_cycles=diag_cycles,
            depth_override=depth_override,
            _tables=tables,
            _res_cum=res_cum,
            _mu_emb=mu_emb,
            _state_caps=np.full(K, step_cap, dtype=np.int64),
            _diag_key=int(kernel_seed(rng)),
        )

    def expected_cycle_steps(self, j: int) -> float:
        """Expected regeneration cycle length at j, in environment jumps."""
        mass = float(self._mu_emb[int(j)])
        return math.inf if mass <= 0.0 else 1.0 / mass

    def _ensure_state(self, j: int) -> None:
        """Materialize diagnostics, depth, warm start, and cap for state j."""
        j = int(j)
        if self.diagnostics[j] is not None:
            return
        expected = self.expected_cycle_steps(j)
        if expected > self.cycle_step_ceiling:
            raise UnsupportedOperationError(
                f"state {j} has expected regeneration cycle length "
                f"~{expected:.2e} jumps (embedded stationary mass "
                f"{float(self._mu_emb[j]):.3e}); anchoring there is not "
                f"feasible at simulation scale"
            )
        n = int(np.clip(self.diag_step_budget / expected, 64, self.diag_cycles))
        cap = int(max(self.step_cap, 50.0 * expected))
        rng_j = np.random.Generator(
            np.random.Philox(key=self._diag_key).jumped(j + 1)
        )
        c, d, lens = sample_cycle_data(
            self.model, self.rates, j, n, rng_j, step_cap=cap
        )
        diag = estimate_constants(
            np.column_stack([c, d]), self.e_pi_lambda, float(lens.mean())
        )
        self.diagnostics[j] = diag
        self.mean_cycle_lengths[j] = float(lens.mean())
        self.depths[j] = (
            self.depth_override
            if self.depth_override is not None
            else choose_n(diag, self.epsilon)
        )
        self.v0[j] = diag.mean_d / (1.0 - diag.mean_c)
        self._state_caps[j] = cap

    def sample_W(self, j: int, rng: np.random.Generator) -> float:
        """One draw of the limiting conditional intensity at state j."""
        self._ensure_state(j)
        t = residual_sampler(self.model, j, rng)
        pairs = sample_cycles(
            self.model,
            self.rates,
            j,
            int(self.depths[j]),
            rng,
            step_cap=int(self._state_caps[j]),
        )
        v = forward_recursion(pairs, v0=float(self.v0[j]))
        mu_j = float(self.rates.mu[j])
        lam_j = float(self.rates.lam[j])
        return g_function(mu_j, lam_j, t) + math.exp(-mu_j * t) * v

    def sample_W_many(self, j: int, size: int, rng: np.random.Generator) -> np.ndarray:
        """Batch draws of W_j; compiled path for built-in sojourn families."""
        self._ensure_state(j)
        if self._tables is None:
            return np.array([self.sample_W(j, rng) for _ in range(int(size))])
        from . import kernels

        t = self._tables
        cap = int(self._state_caps[j])
        out, failures = kernels.w_draws(
            t.P_cum,
            t.kind,
            t.param,
            t.lam,
            t.mu,
            int(j),
            self._res_cum[j],
            int(self.depths[j]),
            float(self.v0[j]),
            int(size),
            kernel_seed(rng),
            cap,
        )
        if failures:
            raise CapExceededError(
                f"{failures} cycle walks at state {j} hit the step cap {cap}"
            )
        return out

    def sample_W_pooled(
        self,
        j: int,
        size: int,
        rng: np.random.Generator,
        pool_size: int = 4096,
    ) -> np.ndarray:
        """Approximate batch draws of W_j from a shared cycle pool.

        Bootstrap-resamples one pool of cycle pairs instead of simulating
        fresh cycles per draw.  Faster, but the output law carries the
        pool's sampling error on top of the truncation error, so treat it
        as approximate.
        """
        self._ensure_state(j)
        size = int(size)
        depth = int(self.depths[j])
        c, d, _ = sample_cycle_data(
            self.model, self.rates, j, pool_size, rng, step_cap=int(self._state_caps[j])
        )
        v = np.full(size, float(self.v0[j]))
        for _ in range(depth):
            idx = rng.integers(0, c.size, size)
            v = c[idx] * v + d[idx]
        t_res = residual_sampler(self.model, j, rng, size=size)
        mu_j = self.rates.mu[j]
        lam_j = self.rates.lam[j]
        return g_function(mu_j, lam_j, t_res) + np.exp(-mu_j * t_res) * v

    def sample_limit_pair(self, rng: np.random.Generator) -> tuple[int, int]:
        """One draw (count, state) from the joint limiting law."""
        u = rng.random()
        j = min(int(np.searchsorted(np.cumsum(self.pi), u, side="right")), self.pi.size - 1)
        w = self.sample_W(j, rng)
        return int(rng.poisson(w)), j

    def sample_states_and_w(
        self, size: int, rng: np.random.Generator
    ) -> tuple[np.ndarray, np.ndarray]:
        """Batch draws of (state, W_state) from the joint limiting law."""
        size = int(size)
        cum = np.cumsum(self.pi)
        states = np.minimum(
            np.searchsorted(cum, rng.random(size), side="right"), self.pi.size - 1
        ).astype(np.int64)
        w = np.empty(size)
        for j in np.unique(states):
            mask = states == j
            w[mask] = self.sample_W_many(int(j), int(mask.sum()), rng)
        return states, w

    def sample_limit_pairs(
        self, size: int, rng: np.random.Generator
    ) -> tuple[np.ndarray, np.ndarray]:
        """Batch draws from the joint limiting law: (counts, states)."""
        states, w = self.sample_states_and_w(size, rng)
        counts = rng.poisson(w).astype(np.int64)
        return counts, states

    def sample_V_many(
        self,
        j: int,
        size: int,
        rng: np.random.Generator,
        depth: int | None = None,
        v0: float = 0.0,
    ) -> np.ndarray:
        """Batch draws of the depth-step recursion value at state j.

        Defaults to the sampler's chosen depth but with the textbook zero
        start, which is what the convergence bound is stated for.
        """
        self._ensure_state(j)
        depth = int(self.depths[j]) if depth is None else int(depth)
        cap = int(self._state_caps[j])
        if self._tables is None:
            out = np.empty(int(size))
            for idx in range(int(size)):
                pairs = sample_cycles(
                    self.model, self.rates, j, depth, rng, step_cap=cap
                )
                out[idx] = forward_recursion(pairs, v0=v0)
            return out
        from . import kernels

        t = self._tables
        out, failures = kernels.v_draws(
            t.P_cum,
            t.kind,
            t.param,
            t.lam,
            t.mu,
            int(j),
            depth,
            float(v0),
            int(size),
            kernel_seed(rng),
            cap,
        )
        if failures:
            raise CapExceededError(
                f"{failures} cycle walks at state {j} hit the step cap {cap}"
            )
        return out


@dataclass(eq=False)
class MomentTable:
    """Per-state perpetuity moments and moments of the mixture law."""

    l_max: int
    per_state: np.ndarray  # (K, l_max + 1) moments of V_j, column l is order l
    per_state_se: np.ndarray
    mixture: np.ndarray  # entry n-1 is the n-th moment of the limiting count law
    mixture_se: np.ndarray


def _w_moment_draws(
    sampler: LimitLawSampler,
    j: int,
    n: int,
    m_j: np.ndarray,
    t_samples: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-draw values f(T) = sum_k S(n,k) E[W_j^k | T] and their E[. | T] pieces.

    Returns (f_draws, coeff) where coeff[m] multiplies the standard error
    of m_j[m] in the delta part of the error budget.
    """
    mu_j = float(sampler.rates.mu[j])
    lam_j = float(sampler.rates.lam[j])
    t = np.asarray(residual_sampler(sampler.model, j, rng, size=t_samples), dtype=np.float64)
    a = g_function(np.full(t.shape, mu_j), np.full(t.shape, lam_j), t)
    b = np.exp(-mu_j * t)
    f = np.zeros(t.shape)
    coeff = np.zeros(n + 1)
    for k in range(1, n + 1):
        s_nk = float(stirling2(n, k))
        for m in range(k + 1):
            term = math.comb(k, m) * a ** (k - m) * b**m
            f += s_nk * term * m_j[m]
            coeff[m] += s_nk * math.comb(k, m) * float(np.mean(a ** (k - m) * b**m))
    return f, coeff


def limit_moment(
    sampler: LimitLawSampler,
    table: MomentTable,
    n: int,
    t_samples: int,
    rng: np.random.Generator,
    return_se: bool = False,
):
    """n-th moment of the limiting count law.

    Uses E[Y^n] = sum_j pi_j sum_k S(n, k) E[W_j^k]: the k-th factorial
    moment of a Poisson mixture is the k-th moment of its intensity, and
    Stirling numbers convert factorial moments back to raw ones.  Moments
    of W_j expand binomially in the residual part and the perpetuity
    moments from ``table``; the residual expectation is Monte Carlo over
    ``t_samples`` draws.
    """
    if not (1 <= n <= table.l_max):
        raise ValueError(f"moment order must be in 1..{table.l_max}, got {n}")
    total = 0.0
    var = 0.0
    for j in range(sampler.pi.size):
        if np.isnan(table.per_state[j, 0]):
            continue
        f, coeff = _w_moment_draws(
            sampler, j, n, table.per_state[j], int(t_samples), rng
        )
        pi_j = float(sampler.pi[j])
        total += pi_j * float(f.mean())
        mc_se = float(f.std(ddof=1)) / math.sqrt(f.size) if f.size > 1 else 0.0
        delta_se = float(
            np.sqrt(np.sum((coeff * table.per_state_se[j, : n + 1]) ** 2))
        )
        var += (pi_j * mc_se) ** 2 + (pi_j * delta_se) ** 2
    if return_se:
        return total, math.sqrt(var)
    return total


def moment_table(
    sampler: LimitLawSampler,
    l_max: int,
    rng: np.random.Generator,
    pairs_per_state: int = 20_000,
    t_samples: int = 20_000,
    pi_floor: float = 1e-8,
) -> MomentTable:
    """Estimate per-state perpetuity moments and mixture moments.

    States carrying stationary mass below ``pi_floor`` are skipped (rows
    filled with nan): their mixture contribution is far below the Monte
    Carlo resolution of the table, and their regeneration cycles are
    typically too long to sample anyway.
    """
    K = sampler.pi.size
    per_state = np.full((K, l_max + 1), np.nan)
    per_state_se = np.full((K, l_max + 1), np.nan)
    for j in range(K):
        if sampler.pi[j] < pi_floor:
            continue
        sampler._ensure_state(j)
        n_pairs = int(
            np.clip(
                sampler.diag_step_budget / sampler.expected_cycle_steps(j),
                64,
                pairs_per_state,
            )
        )
        c, d, _ = sample_cycle_data(
            sampler.model,
            sampler.rates,
            j,
            n_pairs,
            rng,
            step_cap=int(sampler._state_caps[j]),
        )
        m, se = sre_moments(np.column_stack([c, d]), l_max)
        per_state[j] = m
        per_state_se[j] = se
    table = MomentTable(
        l_max=l_max,
        per_state=per_state,
        per_state_se=per_state_se,
        mixture=np.zeros(l_max),
        mixture_se=np.zeros(l_max),
    )
    for n in range(1, l_max + 1):
        value, se = limit_moment(sampler, table, n, t_samples, rng, return_se=True)
        table.mixture[n - 1] = value
        table.mixture_se[n - 1] = se
    return table


def exceedance(
    sampler: LimitLawSampler, c: int, reps: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Estimate P[limiting count >= c] with its standard error.

    Averages the analytic Poisson upper tail P[Poisson(W) >= c] over draws
    of (state, W), which has strictly smaller variance than averaging
    indicator draws of the count itself.
    """
    if c < 0 or int(c) != c:
        raise ValueError(f"threshold must be a nonnegative integer, got {c}")
    if reps < 1:
        raise ValueError(f"reps must be positive, got {reps}")
    reps = int(reps)
    _, w = sampler.sample_states_and_w(reps, rng)
    tails = poisson.sf(int(c) - 1, w)
    est = float(tails.mean())
    se = float(tails.std(ddof=1)) / math.sqrt(reps) if reps > 1 else 0.0
    return est, se
