"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A configuration or argument value violates its documented range."""


class StateError(RuntimeError):
    """An operation was applied to an object in the wrong lifecycle state."""


class CapacityError(ValueError):
    """A fixed-capacity container (cluster slots, sessions) would overflow."""


class BudgetViolationError(RuntimeError):
    """The per-timestep testing budget was exceeded.

    This is a panic-level invariant failure: the allocation layer guarantees
    feasibility by construction, so reaching this means a caller bypassed it.
    """


class CheckpointMismatchError(RuntimeError):
    """A checkpoint's recorded settings conflict with the requested run."""


class TrainingDivergedError(RuntimeError):
    """A training loss became non-finite."""
