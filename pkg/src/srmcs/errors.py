"""Exception types shared across the package."""


class SrmError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SrmError, ValueError):
    """Incompatible sizes, block lengths, levels or parameters."""


class LengthError(SrmError, ValueError):
    """A vector has the wrong length for the map it is handed to."""


class SizeError(SrmError, ValueError):
    """A dense materialization would exceed the configured cap."""
