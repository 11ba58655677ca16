"""Exception types shared across the package."""


class MetricScreenError(Exception):
    """Base class for all package errors."""


class DegeneratePairs(MetricScreenError):
    """Between-class or within-class pair mass is (numerically) zero."""


class DegenerateWeights(MetricScreenError):
    """Rebalancing weights collapsed; effective sample size is too small."""


class InfeasibleConstraint(MetricScreenError, ValueError):
    """Pinned coordinates exceed the l1 budget."""


class DataError(MetricScreenError, ValueError):
    """Malformed user data (labels, features, CSV content)."""
