"""Exception types shared across the toolkit."""


class TptkitError(Exception):
    """Base class for all tptkit errors."""


class ConfigError(TptkitError):
    """Invalid configuration value or inconsistent options."""


class IngestError(TptkitError):
    """Malformed input file or reference to an unknown station."""


class RangeError(TptkitError):
    """Index, coordinate, or timestamp outside the valid domain."""


class ShapeError(TptkitError):
    """Operands with incompatible shapes or lengths."""


class NumericError(TptkitError):
    """Singular system, NaN propagation, or other numerical failure."""


class FitError(TptkitError):
    """Optimizer did not converge; carries the best iterate found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DegenerateStatisticsError(TptkitError):
    """Statistic undefined for the input (zero variance, empty sample)."""


class SeriesError(TptkitError):
    """A series cannot be repaired (e.g. no valid sample at all)."""


class StationLookupError(TptkitError):
    """Station missing from a table or metadata set."""


class TrainingError(TptkitError):
    """Training diverged or produced non-finite loss."""
