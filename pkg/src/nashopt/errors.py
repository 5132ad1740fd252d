"""Exception hierarchy shared across the package."""


class NashoptError(Exception):
    """Base class for all package errors."""


class ShapeError(NashoptError):
    """Dimension mismatch between operands."""


class ContractError(NashoptError):
    """An input violates a documented precondition."""


class SingularityError(NashoptError):
    """A positive-definite factorization failed.

    ``pivot`` carries the index of the failing Cholesky pivot when known.
    """

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class DegeneracyError(NashoptError):
    """Task gradients are (numerically) linearly dependent, or no common
    descent direction exists in the gradient cone."""


class SolverFailure(NashoptError):
    """An iterative solver could not meet its tolerance.

    ``last_iterate`` carries the best point reached before giving up.
    """

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class ConfigError(NashoptError):
    """Invalid experiment or optimizer configuration."""
