"""Exception types shared across the package."""

from __future__ import annotations

__all__ = [
    "CapacityError",
    "QueryError",
    "DataError",
    "CouplingViolation",
    "ConfigError",
    "ReplicaFailure",
]


class CapacityError(RuntimeError):
    """A population exceeded its configured cap."""


class QueryError(RuntimeError):
    """A query was made against state that cannot answer it."""


class DataError(ValueError):
    """Input data violates a structural precondition."""


class CouplingViolation(AssertionError):
    """Rank domination failed in a monotone-coupled run (consistency bug)."""


class ConfigError(ValueError):
    """A scenario configuration is invalid."""


class ReplicaFailure(RuntimeError):
    """One or more replicas of a scenario failed.

    ``failures`` lists (n, replica_index, stream_id, message) tuples.
    """

    def __init__(self, failures):
        self.failures = list(failures)
        detail = "; ".join(
            f"N={n} replica={r} stream={s}: {msg}" for n, r, s, msg in self.failures
        )
        super().__init__(f"{len(self.failures)} replica(s) failed: {detail}")
