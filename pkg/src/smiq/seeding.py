"""Deterministic random streams.

Every run hangs off a single integer seed.  Python-level code uses a numpy
Generator backed by the counter-based Philox engine; compiled batch kernels
derive one splitmix64 counter stream per work item (replication, cycle,
draw) from a 64-bit key pulled off the caller's Generator.  Work item i
always sees the same stream no matter how work is scheduled, so serial and
threaded runs produce identical output.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream_from_seed", "kernel_seed"]


def stream_from_seed(seed: int) -> np.random.Generator:
    """Root Generator for a run, reproducible from the integer seed."""
    return np.random.Generator(np.random.Philox(key=seed))


def kernel_seed(rng: np.random.Generator) -> np.uint64:
    """Draw a 64-bit key that seeds one family of kernel streams."""
    return np.uint64(rng.integers(0, 2**64, dtype=np.uint64))
