"""Exception hierarchy shared by every module."""


class DromestError(Exception):
    """Base class for all package errors."""


class ConfigError(DromestError, ValueError):
    """Invalid problem or run configuration."""


class DomainError(DromestError, ValueError):
    """Argument outside the domain of a function (for example tau <= 0)."""


class NotSmooth(DromestError):
    """The loss has no finite smoothness constant M."""


class Degenerate(DromestError):
    """The f-component of the loss is the indicator of {0} (squared loss).

    Callers must switch to the squared-loss specialisation.
    """


class UseSquaredSpecialization(Degenerate):
    """Raised by expected-envelope evaluators when f is degenerate."""


class BracketTooSmall(DromestError):
    """A grid search found its minimiser on the boundary of the grid."""


class EvaluationError(DromestError):
    """An integrand returned a non-finite value at a quadrature node."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class SolverError(DromestError):
    """Numerical failure inside an optimisation routine."""


class BracketError(SolverError):
    """Geometric bracket expansion exceeded its budget."""


class UnboundedMinimizer(SolverError):
    """The outer minimiser escaped every expanded bracket."""


class ConcavityViolation(SolverError):
    """Inner maximisation over u is not concave at the requested point."""


class DivergedError(SolverError):
    """An iterative solver produced a non-finite objective."""


class ExperimentError(DromestError):
    """Too many failed trials in a Monte Carlo batch."""
