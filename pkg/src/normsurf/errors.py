"""Exception hierarchy shared by all modules."""


class NormsurfError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(NormsurfError, ValueError):
    """Invalid construction parameters (non-convex norm, unknown config key, ...)."""


class DomainError(NormsurfError, ValueError):
    """An operation was called outside its domain (e.g. a zero vector)."""


class ConvergenceError(NormsurfError, ArithmeticError):
    """An iterative solver did not reach its tolerance.

    The final residual is kept on ``residual`` for reporting.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class ImmersionError(NormsurfError, ValueError):
    """The chart differential is rank deficient at the query point."""


class OutOfTubeError(NormsurfError, ValueError):
    """A calibrator query left the tube where the implicit solve is valid."""


class ConnectionNotFound(NormsurfError):
    """Two-point geodesic connection failed after all restarts."""


class ExtensionError(NormsurfError):
    """The convex extension of a pre-convex patch could not be certified."""
