"""Exception types raised across the package."""


class MaxfieldError(ValueError):
    """Base class for invalid input or unsupported requests."""


class DimensionError(MaxfieldError):
    """Lattice points or specs of incompatible dimension."""


class ExtentError(MaxfieldError):
    """A point or neighborhood falls outside the stored grid data."""


class DegenerateKernelError(MaxfieldError):
    """The tail-balance denominator of a moving-maximum kernel is zero."""


class NotGenerableError(MaxfieldError):
    """The field variant cannot be simulated (external data)."""
