"""Exception hierarchy shared by every psnerv module."""


class PSNeRVError(Exception):
    """Base class for all errors raised by psnerv."""


class DimensionError(PSNeRVError, ValueError):
    """Array shapes do not agree."""


class ConfigurationError(PSNeRVError, ValueError):
    """A configuration value violates an invariant."""


class BoundsError(PSNeRVError, IndexError):
    """An index falls outside its valid range."""


class DataError(PSNeRVError, ValueError):
    """Input data is unusable (non-finite values, unknown symbols, ...)."""


class CorruptionError(PSNeRVError, ValueError):
    """A serialized artifact failed an integrity check."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class UsageError(PSNeRVError, RuntimeError):
    """An API was called in the wrong order."""
