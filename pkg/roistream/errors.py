"""Exceptions raised by roistream.

Errors that describe a bad input value also subclass :class:`ValueError` so
that callers can keep catching the builtin.
"""


class RoistreamError(Exception):
    """Base class for all roistream errors."""


class DimensionError(RoistreamError, ValueError):
    """A raster is too small or two rasters disagree in shape."""


class GridError(RoistreamError, ValueError):
    """A block grid is invalid for the raster it partitions."""


class InsufficientDataError(RoistreamError, ValueError):
    """Not enough frames, samples, or profiling segments."""


class DivergenceError(RoistreamError):
    """Training produced a non-finite loss."""


class HorizonMismatchError(RoistreamError, ValueError):
    """Trace, feature streams, and configuration disagree on length."""


class UntrainedModelError(RoistreamError):
    """A camera has no trained utility model."""


class ConfigError(RoistreamError, ValueError):
    """A configuration file or value is malformed."""


class FormatError(RoistreamError, ValueError):
    """An input file does not follow its documented format."""
