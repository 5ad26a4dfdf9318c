"""Built-in models: the worked examples shipped with the package.

* ``intro_ctmc``: two-state environment with a rare switch into a service
  state; the count climbs to about 1000 before service kicks in.
* ``example1``: birth-death environment on pairs (i, 10 - i) where the
  first coordinate drives arrivals and the second drives service; its
  time-stationary law is Binomial(10, 5/9).
* ``example2_exp`` / ``example2_pareto``: a countable-state chain truncated
  to 0..K whose embedded stationary law is Poisson(lam); the two flavors
  differ in sojourn tails (exponential vs shifted Pareto).
* ``feedback``: the two-server bandwidth-degradation system; not a
  semi-Markov queue model but a parameter set for simulate_feedback.
"""

from __future__ import annotations

import numpy as np

from .distributions import Exponential, ShiftedPareto
from .queueing import FeedbackParams, RateMap
from .semi_markov import SemiMarkovModel

__all__ = [
    "intro_ctmc",
    "example1",
    "example2_exp",
    "example2_pareto",
    "feedback_params",
    "model_from_rule",
    "BUILTIN_MODELS",
]

EXAMPLE2_DEFAULT_TRUNCATION = 20


def intro_ctmc() -> tuple[SemiMarkovModel, RateMap]:
    """Two-state switch: state 0 is slow to leave and has no service."""
    model = SemiMarkovModel(
        states=[0, 1],
        P=np.array([[0.0, 1.0], [1.0, 0.0]]),
        sojourns={(0, 1): Exponential(0.001), (1, 0): Exponential(1.0)},
    )
    rates = RateMap(lam=np.array([1.0, 1.0]), mu=np.array([0.0, 1.0]))
    return model, rates


def example1() -> tuple[SemiMarkovModel, RateMap]:
    """Birth-death environment on (i, 10 - i): arrivals i, service 10 - i.

    Jump rates out of state i total 50 - i, split 4i down and 5(10 - i)
    up, so sojourns are Exponential(50 - i) whatever the next state.
    """
    n = 10
    K = n + 1
    P = np.zeros((K, K))
    for i in range(1, n):
        P[i, i - 1] = 4.0 * i / (50.0 - i)
        P[i, i + 1] = 5.0 * (n - i) / (50.0 - i)
    P[0, 1] = 1.0
    P[n, n - 1] = 1.0
    sojourns = {}
    for i in range(K):
        for j in range(K):
            if P[i, j] > 0:
                sojourns[(i, j)] = Exponential(50.0 - i)
    model = SemiMarkovModel(
        states=[(i, n - i) for i in range(K)], P=P, sojourns=sojourns
    )
    rates = RateMap.from_functions(model, lambda s: s[0], lambda s: s[1])
    return model, rates


def _example2_kernel(lam: float, truncation: int) -> np.ndarray:
    if not (0 < lam <= 1):
        raise ValueError(f"the chain parameter must lie in (0, 1], got {lam}")
    if truncation < 1:
        raise ValueError(f"truncation must be at least 1, got {truncation}")
    K = truncation + 1
    P = np.zeros((K, K))
    for i in range(truncation):
        up = lam / (i + 1.0)
        P[i, i + 1] = up
        P[i, 0] += 1.0 - up  # lands on the diagonal at i = 0 unless lam = 1
    P[truncation, 0] = 1.0
    return P


def _example2_build(
    lam: float, truncation: int, sojourn: str
) -> tuple[SemiMarkovModel, RateMap]:
    P = _example2_kernel(lam, truncation)
    K = truncation + 1
    sojourns = {}
    for i in range(K):
        for j in range(K):
            if P[i, j] > 0:
                if sojourn == "exp":
                    sojourns[(i, j)] = Exponential(3.0 * i + 1.0)
                elif sojourn == "pareto_shifted":
                    sojourns[(i, j)] = ShiftedPareto(2.2)
                else:
                    raise ValueError(f"unknown sojourn flavor {sojourn!r}")
    model = SemiMarkovModel(states=list(range(K)), P=P, sojourns=sojourns)
    rates = RateMap.from_functions(model, lambda s: 1.0 + 2.0 * s, lambda s: float(s))
    return model, rates


def example2_exp(
    lam: float = 1.0, truncation: int = EXAMPLE2_DEFAULT_TRUNCATION
) -> tuple[SemiMarkovModel, RateMap]:
    """Truncated countable chain with Exponential(3i + 1) sojourns."""
    return _example2_build(lam, truncation, "exp")


def example2_pareto(
    lam: float = 1.0, truncation: int = EXAMPLE2_DEFAULT_TRUNCATION
) -> tuple[SemiMarkovModel, RateMap]:
    """Truncated countable chain with heavy-tailed ShiftedPareto(2.2) sojourns."""
    return _example2_build(lam, truncation, "pareto_shifted")


def feedback_params() -> FeedbackParams:
    """Parameters in the transient regime: k < (lam / 2)(1/lam0 + 1/lam1)."""
    return FeedbackParams(lam=10.0, lam0=1.0, lam1=1.0, q1=1.0, q2=1.0, k=5)


def model_from_rule(obj: dict) -> SemiMarkovModel:
    """Build a model from a generator rule object (see model_from_json)."""
    rule = obj.get("rule")
    if rule != "example2":
        raise ValueError(f"unknown generator rule {rule!r}")
    lam = float(obj.get("lambda", 1.0))
    truncation = int(obj.get("truncation", EXAMPLE2_DEFAULT_TRUNCATION))
    sojourn = obj.get("sojourn", "exp")
    model, _ = _example2_build(lam, truncation, sojourn)
    return model


BUILTIN_MODELS = {
    "intro_ctmc": intro_ctmc,
    "example1": example1,
    "example2_exp": example2_exp,
    "example2_pareto": example2_pareto,
}
