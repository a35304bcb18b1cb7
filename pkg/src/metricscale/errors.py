"""Exception hierarchy shared across the package."""


class MetricScaleError(Exception):
    """Base class for all errors raised by this package."""


class InputValidationError(MetricScaleError, ValueError):
    """An argument failed a documented precondition."""


class PriorsFormatError(MetricScaleError, ValueError):
    """A size-priors file is malformed or violates a tree invariant."""


class UnknownCategoryError(MetricScaleError, KeyError):
    """A category path does not resolve in the priors tree."""


class SceneFormatError(MetricScaleError, ValueError):
    """A scene bundle directory is missing files or malformed."""


class DegenerateGeometryError(MetricScaleError, ValueError):
    """Point configuration too degenerate for the requested computation."""


class DegenerateUpVectorError(MetricScaleError, ValueError):
    """Camera x-axes do not constrain a unique vertical direction."""


class NoObjectsError(MetricScaleError, ValueError):
    """Scale estimation has no usable measured objects to work with."""


class PlacementError(MetricScaleError, RuntimeError):
    """Simulated objects could not be placed without overlap."""
