"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
MathDomainError -> 4, anything else -> 1.
"""


class AdherenceError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(AdherenceError):
    """Invalid or inconsistent run configuration."""


class DataError(AdherenceError):
    """Problem with input data (audio files, manifests, sampling grids)."""


class InsufficientWindowsError(DataError):
    """Fewer eligible windows than requested."""

    def __init__(self, requested: int, available: int):
        self.requested = requested
        self.available = available
        super().__init__(
            f"insufficient eligible windows: requested {requested}, "
            f"only {available} available (shortfall {requested - available})"
        )


class MathDomainError(AdherenceError):
    """A computation left its mathematical domain (e.g. undefined score)."""


class UndefinedScoreError(MathDomainError):
    """Both constituent distances are zero, so the score is undefined."""


class FormatError(DataError):
    """Malformed embedding interchange file."""


class BadMagicError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class DimensionOverflowError(FormatError):
    pass
