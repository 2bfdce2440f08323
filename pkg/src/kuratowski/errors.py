"""Exception types shared across the package."""


class KuratowskiError(Exception):
    """Base class for every error raised by this package."""


class DomainError(KuratowskiError):
    """A point lies outside the valid region of its chart."""

    def __init__(self, message, arclength=None):
        super().__init__(message)
        # Set when the failure happens part way through a geodesic integration.
        self.arclength = arclength


class UsageError(KuratowskiError, ValueError):
    """An operation was called with arguments violating its preconditions."""


class OutOfRangeError(KuratowskiError):
    """A query lies beyond the radius where the method is trustworthy."""


class UndefinedDirectionError(UsageError):
    """A direction or angle was requested between coincident points."""


class ResourceError(KuratowskiError):
    """A computation would exceed the node/memory budget or could not write output."""


class ConfigError(UsageError):
    """The experiment configuration failed to parse or validate."""
