"""Exception types shared across the package."""


class ScaleFreeError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(ScaleFreeError, ValueError):
    """An argument is outside its documented domain."""


class ScaleRangeError(ScaleFreeError, ValueError):
    """The requested octave range is infeasible for the given data."""


class DegenerateInputError(ScaleFreeError, ValueError):
    """The input carries no usable signal (constant, all-zero, ...)."""


class DataFormatError(ScaleFreeError, ValueError):
    """An input file does not match the documented schema."""


class EstimationError(ScaleFreeError, ValueError):
    """An estimator cannot run on the given data (too few segments, ...)."""
