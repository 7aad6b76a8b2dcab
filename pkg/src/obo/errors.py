"""Exception types shared across the library."""


class OboError(Exception):
    """Base class for all library errors."""


class ArgumentError(OboError, ValueError):
    """An argument is outside its documented range."""


class DimensionError(OboError):
    """Vector/matrix dimensions do not agree."""


class NumericalError(OboError):
    """A computation produced NaN or Inf."""


class ConfigError(OboError):
    """Invalid stream or experiment configuration."""


class DomainError(OboError):
    """Invalid projection domain (e.g. non-positive radius, lo > hi)."""


class ConvergenceError(OboError):
    """An iterative solve exhausted its budget before reaching tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SolverBreakdown(OboError):
    """Conjugate gradient met a direction of non-positive curvature."""


class OracleCapabilityError(OboError):
    """The oracle lacks a capability required by the operation."""


class EmptyWindowError(OboError):
    """Window average requested on an empty buffer."""


class EmptyLogError(OboError):
    """Metric requested on an empty run log."""


class IoError(OboError):
    """Artifact read/write failure."""
