"""Semi-Markov environment processes on a finite state space.

A model is an embedded jump chain (kernel ``P`` with zero diagonal) plus a
sojourn law for every possible transition: when the environment enters state
``i`` and its next state will be ``j``, the time spent in ``i`` is drawn
from ``sojourns[(i, j)]``.  Sojourns are conditionally independent given the
chain path.

The module provides structural validation, the stationary law of the
embedded chain, the time-stationary law of the continuous process, path
sampling up to a horizon, the size-biased residual law seen from a state at
a large time, and the split of a path into regeneration cycles at an anchor
state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.sparse import csr_matrix

from .distributions import SojournDist, dist_to_json, dist_from_json
from .errors import CapExceededError, ConvergenceError

__all__ = [
    "SemiMarkovModel",
    "Trajectory",
    "CycleDecomposition",
    "ValidationCheck",
    "ValidationReport",
    "validate_model",
    "stationary_embedded",
    "stationary_time",
    "mean_sojourn",
    "sample_trajectory",
    "residual_sampler",
    "decompose_cycles",
    "model_to_json",
    "model_from_json",
]

_DENSE_SOLVE_MAX = 200
_POWER_ITER_CAP = 1_000_000
_ROW_SUM_TOL = 1e-9


@dataclass(eq=False)
class Trajectory:
    """Piecewise-constant environment path: parallel state/duration arrays.

    ``durations[k]`` is the time spent in ``states[k]``; the final segment
    may be truncated by the sampling horizon.
    """

    states: np.ndarray
    durations: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.int64)
        self.durations = np.asarray(self.durations, dtype=np.float64)
        if self.states.ndim != 1 or self.states.shape != self.durations.shape:
            raise ValueError("states and durations must be 1-D arrays of equal length")
        if self.states.size == 0:
            raise ValueError("a trajectory needs at least one segment")
        if np.any(self.durations < 0):
            raise ValueError("segment durations must be nonnegative")

    @property
    def start_state(self) -> int:
        return int(self.states[0])

    @property
    def total_time(self) -> float:
        return float(self.durations.sum())

    @property
    def segments(self) -> list[tuple[int, float]]:
        return list(zip(self.states.tolist(), self.durations.tolist()))

    def __len__(self) -> int:
        return self.states.size


@dataclass(eq=False)
class CycleDecomposition:
    """A trajectory split at the instants a sojourn in ``anchor`` begins.

    ``pre_cycle`` holds everything before the first anchor entry (None when
    the path starts at the anchor), each element of ``cycles`` runs from one
    anchor entry to the next, and ``residual`` runs from the last anchor
    entry to the end of the path (None when the anchor is never entered, in
    which case the whole path sits in ``pre_cycle``).
    """

    anchor: int
    pre_cycle: Trajectory | None
    cycles: list[Trajectory]
    residual: Trajectory | None


@dataclass(frozen=True)
class ValidationCheck:
    name: str
    passed: bool
    detail: str


@dataclass
class ValidationReport:
    checks: list[ValidationCheck] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            mark = "ok" if c.passed else "FAIL"
            lines.append(f"[{mark:4s}] {c.name}: {c.detail}")
        lines.append("model valid" if self.ok else "model INVALID")
        return "\n".join(lines)


@dataclass(eq=False)
class SemiMarkovModel:
    """Finite-state semi-Markov environment.

    ``states`` are display labels; all numeric APIs use integer indices into
    this list.  ``sojourns`` maps index pairs ``(i, j)`` with ``P[i, j] > 0``
    to the sojourn law of a stay in ``i`` that ends with a jump to ``j``.
    ``initial`` is the law of the state at time 0 (defaults to a point mass
    at index 0).
    """

    states: list
    P: np.ndarray
    sojourns: dict[tuple[int, int], SojournDist]
    initial: np.ndarray | None = None

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64)
        if self.P.ndim != 2 or self.P.shape[0] != self.P.shape[1]:
            raise ValueError("P must be a square matrix")
        if self.P.shape[0] != len(self.states):
            raise ValueError("P size does not match the number of states")
        if self.initial is None:
            init = np.zeros(len(self.states))
            init[0] = 1.0
            self.initial = init
        else:
            self.initial = np.asarray(self.initial, dtype=np.float64)
            if self.initial.shape != (len(self.states),):
                raise ValueError("initial law length does not match the number of states")

    @property
    def n_states(self) -> int:
        return len(self.states)

    def mean_matrix(self) -> np.ndarray:
        """Mean sojourn per transition: entry (i, j) for P[i, j] > 0, else 0."""
        m = np.zeros_like(self.P)
        for (i, j), dist in self.sojourns.items():
            if self.P[i, j] > 0:
                m[i, j] = dist.mean()
        return m


def validate_model(model: SemiMarkovModel) -> ValidationReport:
    """Check every model requirement; reports findings instead of raising."""
    report = ValidationReport()
    P = model.P
    K = model.n_states

    bad = ~(np.isfinite(P) & (P >= 0))
    report.checks.append(
        ValidationCheck(
            "entries",
            not bad.any(),
            "all kernel entries finite and nonnegative"
            if not bad.any()
            else f"bad entries at {list(zip(*np.nonzero(bad)))}",
        )
    )

    row_sums = P.sum(axis=1)
    off = np.abs(row_sums - 1.0) > _ROW_SUM_TOL
    report.checks.append(
        ValidationCheck(
            "row_stochastic",
            not off.any(),
            "all rows sum to 1"
            if not off.any()
            else f"rows {np.nonzero(off)[0].tolist()} sum to {row_sums[off].tolist()}",
        )
    )

    diag = np.abs(np.diag(P)) > 1e-12
    report.checks.append(
        ValidationCheck(
            "zero_diagonal",
            not diag.any(),
            "no self-transitions"
            if not diag.any()
            else f"self-transition probability at states {np.nonzero(diag)[0].tolist()}",
        )
    )

    finite_part = np.where(np.isfinite(P), P, 0.0)
    n_comp, _ = connected_components(
        csr_matrix(finite_part > 0), directed=True, connection="strong"
    )
    report.checks.append(
        ValidationCheck(
            "irreducible",
            n_comp == 1,
            "kernel graph strongly connected"
            if n_comp == 1
            else f"kernel graph splits into {n_comp} strongly connected components",
        )
    )

    missing = [
        (i, j)
        for i in range(K)
        for j in range(K)
        if P[i, j] > 0 and (i, j) not in model.sojourns
    ]
    report.checks.append(
        ValidationCheck(
            "sojourns_present",
            not missing,
            "every positive-probability transition has a sojourn law"
            if not missing
            else f"missing sojourn laws for transitions {missing}",
        )
    )

    bad_means = []
    for (i, j), dist in model.sojourns.items():
        if 0 <= i < K and 0 <= j < K and P[i, j] > 0:
            m = dist.mean()
            if not (np.isfinite(m) and m > 0):
                bad_means.append((i, j, m))
    report.checks.append(
        ValidationCheck(
            "sojourn_means_finite",
            not bad_means,
            "all sojourn means finite and positive"
            if not bad_means
            else f"degenerate sojourn means: {bad_means}",
        )
    )

    init = model.initial
    init_ok = bool(np.all(init >= 0) and abs(init.sum() - 1.0) <= _ROW_SUM_TOL)
    report.checks.append(
        ValidationCheck(
            "initial_law",
            init_ok,
            "initial law is a probability vector"
            if init_ok
            else f"initial law sums to {init.sum()} with min {init.min()}",
        )
    )

    return report


def stationary_embedded(model: SemiMarkovModel, tol: float = 1e-12) -> np.ndarray:
    """Stationary law of the embedded jump chain, solving mu = mu P.

    Small kernels get a dense linear solve; larger ones fall back to lazy
    power iteration (which also handles periodic chains).
    """
    P = model.P
    K = model.n_states
    if K <= _DENSE_SOLVE_MAX:
        A = P.T - np.eye(K)
        A[-1, :] = 1.0
        b = np.zeros(K)
        b[-1] = 1.0
        try:
            mu = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            mu, *_ = np.linalg.lstsq(A, b, rcond=None)
        mu = np.clip(mu, 0.0, None)
        mu /= mu.sum()
        if np.abs(mu @ P - mu).sum() < max(tol, 1e-12):
            return mu
        # fall through to iteration when the direct solve is too rough
    mu = np.full(K, 1.0 / K)
    for _ in range(_POWER_ITER_CAP):
        nxt = 0.5 * (mu + mu @ P)
        nxt /= nxt.sum()
        if np.abs(nxt @ P - nxt).sum() < tol:
            return nxt
        mu = nxt
    raise ConvergenceError(
        f"stationary law iteration did not reach tolerance {tol} "
        f"within {_POWER_ITER_CAP} steps"
    )


def mean_sojourn(model: SemiMarkovModel, i: int) -> float:
    """Mean time spent in state i per visit, averaged over the next state."""
    row = model.P[i]
    total = 0.0
    for j in np.nonzero(row > 0)[0]:
        total += row[j] * model.sojourns[(i, int(j))].mean()
    return total


def stationary_time(model: SemiMarkovModel) -> np.ndarray:
    """Time-stationary law of the environment.

    Weights each embedded-chain visit by its mean duration: entry j is
    proportional to mu_j * m_j with mu the embedded stationary law and m_j
    the mean sojourn in j.
    """
    mu = stationary_embedded(model)
    m = np.array([mean_sojourn(model, i) for i in range(model.n_states)])
    w = mu * m
    return w / w.sum()


def _draw_index(cumulative: np.ndarray, u: float) -> int:
    # first index whose cumulative mass exceeds u; index order is part of
    # the reproducibility contract
    idx = int(np.searchsorted(cumulative, u, side="right"))
    return min(idx, cumulative.size - 1)


def sample_trajectory(
    model: SemiMarkovModel,
    horizon: float,
    rng: np.random.Generator,
    max_segments: int = 10_000_000,
) -> Trajectory:
    """Sample an environment path on [0, horizon].

    The final sojourn is truncated at the horizon so segment durations sum
    to exactly ``horizon``.  A zero horizon yields a single zero-length
    segment at the initial state.
    """
    if horizon < 0:
        raise ValueError(f"horizon must be nonnegative, got {horizon}")
    init_cum = np.cumsum(model.initial)
    start = _draw_index(init_cum, rng.random())
    if horizon == 0:
        return Trajectory(np.array([start]), np.array([0.0]))

    P_cum = np.cumsum(model.P, axis=1)
    states: list[int] = []
    durations: list[float] = []
    i = start
    elapsed = 0.0
    while True:
        if len(states) >= max_segments:
            raise CapExceededError(
                f"trajectory exceeded the segment cap of {max_segments}"
            )
        j = _draw_index(P_cum[i], rng.random())
        length = float(model.sojourns[(i, j)].sample(rng))
        if elapsed + length >= horizon:
            states.append(i)
            durations.append(horizon - elapsed)
            break
        states.append(i)
        durations.append(length)
        elapsed += length
        i = j
    return Trajectory(np.array(states), np.array(durations))


def residual_sampler(
    model: SemiMarkovModel, j: int, rng: np.random.Generator, size=None
):
    """Draw from the stationary residual sojourn law at state j.

    This is the size-biased pick of the transition out of j (weight
    P[j, k] * mean(F_jk)) followed by an equilibrium draw from the chosen
    law; it is the limit law of the time already spent in j when the
    process is observed in state j at a large time.
    """
    row = model.P[j]
    ks = np.nonzero(row > 0)[0]
    dists = [model.sojourns[(j, int(k))] for k in ks]
    weights = np.array([row[k] * dist.mean() for k, dist in zip(ks, dists)])
    cum = np.cumsum(weights / weights.sum())

    if size is None:
        pick = _draw_index(cum, rng.random())
        return float(dists[pick].equilibrium_sample(rng))

    size = int(size)
    picks = np.minimum(
        np.searchsorted(cum, rng.random(size), side="right"), cum.size - 1
    )
    out = np.empty(size)
    for pick, dist in enumerate(dists):
        mask = picks == pick
        hits = int(mask.sum())
        if hits:
            out[mask] = dist.equilibrium_sample(rng, size=hits)
    return out


def decompose_cycles(traj: Trajectory, j: int) -> CycleDecomposition:
    """Split a trajectory at the instants a sojourn in state j begins.

    Concatenating pre_cycle, the cycles, and residual in order reproduces
    the input segment for segment.
    """
    hits = np.nonzero(traj.states == j)[0]
    if hits.size == 0:
        return CycleDecomposition(anchor=j, pre_cycle=traj, cycles=[], residual=None)

    def piece(a: int, b: int) -> Trajectory:
        return Trajectory(traj.states[a:b].copy(), traj.durations[a:b].copy())

    pre = piece(0, hits[0]) if hits[0] > 0 else None
    cycles = [piece(int(a), int(b)) for a, b in zip(hits[:-1], hits[1:])]
    residual = piece(int(hits[-1]), len(traj))
    return CycleDecomposition(anchor=j, pre_cycle=pre, cycles=cycles, residual=residual)


def _label_to_json(label):
    if isinstance(label, tuple):
        return list(label)
    return label


def _label_from_json(label):
    if isinstance(label, list):
        return tuple(label)
    return label


def model_to_json(model: SemiMarkovModel) -> dict:
    """JSON-ready description of a model with built-in sojourn laws."""
    sojourns = {
        f"{i}->{j}": dist_to_json(dist)
        for (i, j), dist in sorted(model.sojourns.items())
        if model.P[i, j] > 0
    }
    return {
        "states": [_label_to_json(s) for s in model.states],
        "P": model.P.tolist(),
        "sojourns": sojourns,
        "initial": model.initial.tolist(),
    }


def model_from_json(obj: dict) -> SemiMarkovModel:
    """Build a model from its JSON form or from a generator rule.

    Explicit form: ``{"states": [...], "P": [[...]], "sojourns":
    {"i->j": {...}}, "initial": [...]}``.  Generator form: ``{"rule":
    "example2", "lambda": 1.0, "truncation": 20, "sojourn": "exp"}`` for the
    built-in countable-state family truncated to a finite range.
    """
    if not isinstance(obj, dict):
        raise ValueError("model spec must be a JSON object")
    if "rule" in obj:
        from .presets import model_from_rule

        return model_from_rule(obj)
    try:
        states = [_label_from_json(s) for s in obj["states"]]
        P = np.asarray(obj["P"], dtype=np.float64)
        raw_sojourns = obj["sojourns"]
    except KeyError as exc:
        raise ValueError(f"model spec is missing required key {exc}")
    sojourns = {}
    for key, spec in raw_sojourns.items():
        try:
            left, right = key.split("->")
            pair = (int(left), int(right))
        except ValueError:
            raise ValueError(f"sojourn key {key!r} is not of the form 'i->j'")
        sojourns[pair] = dist_from_json(spec)
    initial = obj.get("initial")
    return SemiMarkovModel(states=states, P=P, sojourns=sojourns, initial=initial)
