"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Subsystem dimensions are inconsistent with a matrix."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ContractError(ValueError):
    """A caller-supplied object breaks an operation's contract (e.g. a non-linear map)."""


class CapacityError(ValueError):
    """A problem exceeds a configured size cap."""


class SolverError(RuntimeError):
    """The SDP backend failed to produce a trustworthy optimum."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class ConfigError(ValueError):
    """An experiment configuration failed validation."""
