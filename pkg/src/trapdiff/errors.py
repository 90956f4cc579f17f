"""Exception hierarchy shared by all modules."""


class TrapdiffError(Exception):
    """Base class for all package errors."""


class ConfigurationError(TrapdiffError):
    """Invalid parameters or geometry (fail-fast, raised before any run)."""


class NumericsError(TrapdiffError):
    """Quadrature non-convergence, linear-solve failure, or iteration failure."""


class SaturationOverflowError(NumericsError):
    """Trapped density exceeds the physical capacity of the boundary layer."""


class StencilDegradationError(TrapdiffError):
    """A full biquadratic interpolation patch could not be built near a ghost point."""
