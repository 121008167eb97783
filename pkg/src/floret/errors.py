class FloretError(Exception):
    """Base class for errors raised by this package."""


class ModelError(FloretError, ValueError):
    """An invalid model description, data file, or parameter vector."""


class EstimationError(FloretError):
    """The maximum likelihood estimate is undefined for the given data."""


class BoundaryError(FloretError):
    """An asymptotic quantity was requested at a point on the simplex boundary."""
