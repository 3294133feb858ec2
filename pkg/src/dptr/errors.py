"""Exception hierarchy shared across the package."""


class DptrError(Exception):
    """Base class for all errors raised by this package."""


class PanelFormatError(DptrError):
    """Malformed panel input: parse failures, duplicates, unbalanced cells."""


class DimensionError(DptrError):
    """Array shapes or panel dimensions incompatible with the operation."""


class InstrumentSpecError(DptrError):
    """Instrument lag rule references a period that does not exist."""


class RankDeficientError(DptrError):
    """Profiled coefficient system is rank deficient at a threshold value."""

    def __init__(self, gamma, message=None):
        self.gamma = gamma
        super().__init__(message or f"rank-deficient coefficient system at gamma={gamma!r}")


class SingularMomentError(DptrError):
    """Centered moment covariance not invertible (after jitter retry)."""

    def __init__(self, eigenvalue, message=None):
        self.eigenvalue = eigenvalue
        super().__init__(
            message or f"moment covariance numerically singular (min eigenvalue {eigenvalue!r})"
        )


class EstimationError(DptrError):
    """Estimation could not produce a solution (e.g. whole grid failed)."""


class BootstrapError(DptrError):
    """Bootstrap run failed, e.g. too many failed replicates."""


class InternalConsistencyError(DptrError):
    """A mathematically impossible value was produced (beyond noise tolerance)."""
