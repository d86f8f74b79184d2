"""Exception types shared across the package."""


class AnalysisError(Exception):
    """Base class for numerical-analysis failures (singularity, instability, bad model)."""


class SingularityError(AnalysisError):
    """A denominator vanished at a specific evaluation point."""

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class NumericalInstabilityError(AnalysisError):
    """Accumulated floating-point error exceeded a hard health bound."""


class UnsupportedDistributionError(AnalysisError):
    """The requested analysis does not apply to this degree distribution."""


class ComparisonFailure(AnalysisError):
    """An asserted simulation-vs-prediction comparison did not meet its bar."""
