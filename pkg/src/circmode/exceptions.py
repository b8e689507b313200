"""Exception hierarchy."""


class CircModeError(Exception):
    """Base class for all package errors."""


class DegenerateDensity(CircModeError):
    """The density is numerically flat: its derivative never changes sign."""


class NotAttainable(CircModeError):
    """The critical concentration lies beyond the search interval."""


class FitFailure(CircModeError):
    """An iterative fit (EM, variogram) degenerated or did not converge."""


class ZeroDensity(CircModeError):
    """A density value needed as a denominator is numerically zero."""


class InvalidK(CircModeError, ValueError):
    """The requested number of arcs/modes is incompatible with the sample."""


class TooLarge(CircModeError, ValueError):
    """Input too large for an exponential-time oracle."""


class CollidingNeighborhoods(CircModeError):
    """Modification neighbourhoods of the calibration density overlap."""


class QuadratureFailure(CircModeError):
    """Adaptive quadrature did not reach the requested accuracy."""


class EmptyRaster(CircModeError, ValueError):
    """No pixels were supplied for land-cover aggregation."""


class SpanMismatch(CircModeError):
    """The observed year span differs from the configured one."""


class EmptyInput(CircModeError, ValueError):
    """An input file parsed to zero records."""
