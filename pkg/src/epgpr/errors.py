"""Exception types raised across the package."""


class EPError(Exception):
    """Base class for all package errors."""


class NonFinite(EPError, ValueError):
    pass


class ConvergenceFailure(EPError):
    pass


class NotPositiveDefinite(EPError):
    pass


class DimensionMismatch(EPError, ValueError):
    pass


class ParseError(EPError, ValueError):
    """Malformed input file. ``where`` names the offending line or field."""

    def __init__(self, message, where=None):
        self.where = where
        if where is not None:
            message = f"{where}: {message}"
        super().__init__(message)


class SymmetryViolation(EPError, ValueError):
    pass


class SolverError(EPError):
    """Eigensolver failure at a particular orbit angle."""

    def __init__(self, message, index=None):
        self.index = index
        super().__init__(message if index is None else f"angle index {index}: {message}")


class AmbiguousAssignment(EPError):
    pass


class TooSparse(EPError):
    pass


class NotExchanging(EPError, ValueError):
    pass


class ZeroVector(EPError, ValueError):
    pass


class ZeroVariance(EPError, ValueError):
    pass


class NoRootFound(EPError):
    """Root search failed. ``best`` holds the point with the smallest residual."""

    def __init__(self, message, best=None, residual=None):
        self.best = best
        self.residual = residual
        super().__init__(message)


class OptimizerStall(UserWarning):
    """Hyperparameter optimization ended without converging; best model kept."""


class AmbiguousPair(UserWarning):
    """The two smallest pair discrepancies are not well separated."""


class ConfigError(EPError, ValueError):
    """Invalid run configuration."""
