"""Exception types shared across the package."""


class AsgError(Exception):
    """Base class for all errors raised by this package."""


class DataError(AsgError):
    """Malformed, inconsistent, or insufficient input data."""


class ParseError(DataError):
    """A file could not be parsed; the message names the offending row."""


class DimensionError(DataError):
    """Feature dimensionality or column-count mismatch."""


class InsufficientDataError(DataError):
    """An operation needs more instances than the data provides."""


class UsageError(AsgError):
    """Invalid command-line usage or configuration."""
