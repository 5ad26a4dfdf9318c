"""Exception types shared across the package."""

from __future__ import annotations

__all__ = [
    "SmiqError",
    "InfiniteMeanError",
    "UnsupportedOperationError",
    "CapExceededError",
    "MomentConditionError",
    "ConvergenceError",
]


class SmiqError(Exception):
    """Base class for package-specific failures."""


class InfiniteMeanError(SmiqError, ValueError):
    """A sojourn law with infinite mean was requested where a mean is required."""


class UnsupportedOperationError(SmiqError, RuntimeError):
    """The requested operation is not available for this object."""


class CapExceededError(SmiqError, RuntimeError):
    """An event or step budget was exhausted before the simulation finished."""


class MomentConditionError(SmiqError, ValueError):
    """A moment condition needed by a recursion does not hold for the data."""


class ConvergenceError(SmiqError, RuntimeError):
    """An iterative solver failed to reach its tolerance within its budget."""
