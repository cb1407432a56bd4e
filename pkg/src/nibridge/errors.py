"""Exception hierarchy.

Validation problems (bad input) and numerical failures (a solver or
integrator giving up) are kept apart; the command-line runner maps them to
different exit codes.
"""


class NibridgeError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(NibridgeError, ValueError):
    """Input violates a documented precondition."""


class DomainError(ValidationError):
    """Argument outside the domain where the quantity is defined."""


class UsageError(ValidationError):
    """Inconsistent combination of otherwise valid inputs."""


class NumericalError(NibridgeError, ArithmeticError):
    """A numerical procedure failed to deliver a trustworthy result."""


class ConditioningError(NumericalError):
    """Karlin-McGregor matrix too ill-conditioned for the requested drift."""

    def __init__(self, message, x=None, b=None, t=None, rcond=None):
        super().__init__(message)
        self.x = x
        self.b = b
        self.t = t
        self.rcond = rcond


class IntegrationError(NumericalError):
    """SDE or ODE integration could not proceed."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SolverError(NumericalError):
    """Limit-shape solver did not converge."""

    def __init__(self, message, mismatch=None, iterations=None):
        super().__init__(message)
        self.mismatch = mismatch
        self.iterations = iterations


class TopologyError(SolverError):
    """The limit shape leaves the single-interval regime."""


class FitError(NumericalError):
    """Square-root edge model does not describe the density."""


class OracleError(NumericalError):
    """Reference oracle failed its own convergence check."""
