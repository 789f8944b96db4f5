"""Exception types shared across the package."""


class ABCSMCError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(ABCSMCError):
    """A parameter vector is outside the model's admissible set (e.g. non-finite)."""


class InvalidInputError(ABCSMCError):
    """Malformed data passed to a statistic or distance computation."""


class InvalidConfigError(ABCSMCError):
    """A run or bound configuration fails validation."""


class OutOfRangeError(ABCSMCError):
    """A requested evaluation point lies outside the computed ladder range."""


class LadderStallError(ABCSMCError):
    """The ESS is already below the target before the inverse temperature moved.

    Usually means tau is too high for the current particle system, or the
    weights were degraded by an importance-sampling replicate refresh.
    Carries the partial trace when raised from the SMC driver.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class DegenerateSystemError(ABCSMCError):
    """All particle weights vanished or the system collapsed to one particle."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
