"""Exception types shared across the package."""


class DensnavError(Exception):
    """Base class for all package-specific failures."""


class DimensionMismatchError(DensnavError, ValueError):
    """State dimension does not match the field or environment dimension."""


class MalformedObstacleError(DensnavError, ValueError):
    """Obstacle geometry violates a structural requirement (e.g. h - s <= 0)."""


class UnboundedDensityError(DensnavError, ValueError):
    """Density requested at a point where it is not representable."""


class EstimationError(DensnavError, RuntimeError):
    """A Monte Carlo estimate could not be formed from the drawn samples."""


class DomainError(DensnavError, ValueError):
    """Point lies outside the domain where the queried function is defined."""


class ScenarioError(DensnavError, ValueError):
    """Scenario file is malformed; the message names the offending field."""
