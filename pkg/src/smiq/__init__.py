"""Infinite-server queues in a semi-Markov random environment.

Simulate the queue exactly, sample from its long-run law directly (a
Poisson mixture over a perpetuity-valued intensity), compute moments of
that law, and estimate tail probabilities, all reproducibly from a single
seed.
"""

from .distributions import (
    Custom,
    Exponential,
    ShiftedPareto,
    SojournDist,
    dist_from_json,
    dist_to_json,
)
from .errors import (
    CapExceededError,
    ConvergenceError,
    InfiniteMeanError,
    MomentConditionError,
    SmiqError,
    UnsupportedOperationError,
)
from .limit_law import (
    LimitLawSampler,
    MomentTable,
    exceedance,
    limit_moment,
    moment_table,
    sre_moments,
    sre_moments_analytic,
    stirling2,
)
from .perpetuity import (
    CyclePair,
    SreDiagnostics,
    choose_n,
    cycle_functionals,
    estimate_constants,
    forward_recursion,
    pairs_from_trajectory,
    pairs_to_csv,
    sample_cycle,
    sample_cycle_data,
    sample_cycles,
)
from .presets import (
    BUILTIN_MODELS,
    example1,
    example2_exp,
    example2_pareto,
    feedback_params,
    intro_ctmc,
    model_from_rule,
)
from .queueing import (
    FeedbackParams,
    FeedbackPath,
    QueuePath,
    RateMap,
    cycle_increments,
    g_function,
    growth_rate,
    interval_update,
    phi_and_i,
    simulate_conditional,
    simulate_feedback,
    simulate_gillespie,
    terminal_counts_conditional,
    terminal_counts_gillespie,
)
from .seeding import kernel_seed, stream_from_seed
from .semi_markov import (
    CycleDecomposition,
    SemiMarkovModel,
    Trajectory,
    ValidationReport,
    decompose_cycles,
    mean_sojourn,
    model_from_json,
    model_to_json,
    residual_sampler,
    sample_trajectory,
    stationary_embedded,
    stationary_time,
    validate_model,
)
from .stats import EmpiricalCloud, empirical_w1, ks_stat, moment_z, pmf_from_samples, pmf_tv

__version__ = "0.1.0"
