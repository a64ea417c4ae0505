"""Exception types shared across the package."""


class TdclustError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(TdclustError):
    """A symmetric matrix failed the Cholesky positivity test."""


class DimensionMismatch(TdclustError):
    """Vector/matrix dimensions do not agree."""


class SingularSsp(TdclustError):
    """A pooled scatter matrix is singular for the given configuration.

    Usually means the data are not in general position or the retention
    count is too small relative to g*d.
    """

    def __init__(self, message, configuration=None):
        super().__init__(message)
        self.configuration = configuration


class InstanceTooLarge(TdclustError):
    """Exhaustive enumeration was requested beyond the feasibility guard."""


class InitFailed(TdclustError):
    """Random initialization failed repeatedly (singular seed subsets)."""


class AllStartsFailed(TdclustError):
    """Every multistart run raised before producing a configuration."""


class NoFeasibleConfiguration(TdclustError):
    """Every enumerated configuration had a singular scatter matrix."""


class LengthMismatch(TdclustError):
    """Two lists that must have equal length do not."""


class ShellPlacementFailed(TdclustError):
    """Could not place a shell outlier nearest to its assigned center."""


class GeneralPositionViolated(TdclustError):
    """A constructed dataset contains an affinely dependent point set."""


class NotAFixedPoint(TdclustError):
    """A configuration handed to a certificate check is not a fixed point."""


class CsvParseError(TdclustError):
    """A CSV observation file could not be parsed."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row
