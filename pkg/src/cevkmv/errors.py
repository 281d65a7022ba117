"""Exception types shared across the library."""


class CevKmvError(Exception):
    """Base class for all library-specific errors."""


class NoConvergence(CevKmvError):
    """An iterative solver exhausted its iteration budget."""


class GridTooCoarse(CevKmvError):
    """The PDE grid failed its self-reported convergence check."""


class NoWithinVariation(CevKmvError):
    """Fixed-effects slope is unidentified: no within-firm variation."""


class CalibrationDiverged(CevKmvError):
    """The elasticity search terminated at a boundary of its interval."""


class DegenerateSample(CevKmvError):
    """A sample has zero variance, so the gamma MLE does not exist."""


class InsufficientHistory(CevKmvError):
    """Fewer return observations than the volatility window requires."""


class AllMissing(CevKmvError):
    """A firm has no observed value at all for a required field."""


class ExclusionThresholdExceeded(CevKmvError):
    """More than the tolerated share of a group was excluded from a run."""


class ValidationError(CevKmvError):
    """Malformed or inconsistent study inputs."""
