"""Exception types shared across the package."""


class DiffmixError(Exception):
    """Base class for all package-specific errors."""


class UsageError(DiffmixError):
    """Bad command-line arguments or configuration."""


class DataError(DiffmixError):
    """Malformed or inconsistent input data."""


class NumericalError(DiffmixError):
    """A numerical procedure failed or left its validity envelope."""


class SeriesTruncationError(NumericalError):
    """The transition series needs more terms than the configured cap.

    Raised when the elapsed time is too small for the requested tail
    tolerance; callers should increase the cap or the tolerance.
    """


class TruncationCapError(NumericalError):
    """The random truncation level exceeded the configured component cap."""
