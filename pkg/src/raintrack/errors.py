"""Exception types shared across raintrack."""


class RaintrackError(Exception):
    """Base class for all raintrack errors."""


class FormatError(RaintrackError):
    """File is not a PGRD file or has an unsupported version."""


class CorruptFileError(RaintrackError):
    """PGRD payload is truncated or has trailing bytes."""


class InvalidDataError(RaintrackError, ValueError):
    """Field values violate the series invariants (negative or non-finite)."""


class ConsistencyError(RaintrackError):
    """Internal cross-references disagree (e.g. a link names an unknown cluster)."""


class UndefinedRatioError(RaintrackError, ZeroDivisionError):
    """A bias ratio was requested against a zero reference factor."""


class SpecError(RaintrackError, ValueError):
    """A synthetic storm description is invalid or cannot be rendered."""


class ConfigError(RaintrackError):
    """Run configuration is invalid or inputs are incompatible."""
