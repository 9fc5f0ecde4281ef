"""Exception hierarchy. Every externally reportable failure has its own class
so callers (and the CLI) can map failures to distinct exit codes."""


class ThermArrayError(Exception):
    """Base class for all library errors."""


class ValidationError(ThermArrayError, ValueError):
    """A domain-type invariant was violated (bad bbox, negative range, ...)."""


class MalformedHeaderError(ThermArrayError, ValueError):
    """Frame-stream header line is not valid JSON or lacks required keys."""


class TruncatedPayloadError(ThermArrayError, ValueError):
    """Frame-stream payload ends before the header-declared frame count."""


class DimensionMismatchError(ThermArrayError, ValueError):
    """Grid dimensions disagree with the sensor spec they claim to follow."""


class SchemaVersionError(ThermArrayError, ValueError):
    """Serialized document carries an unsupported schema version."""


class InvalidPatternError(ThermArrayError, ValueError):
    """Missing-cell pattern is not fillable (not chessboard-like, too sparse)."""


class InfeasibleKError(ThermArrayError, ValueError):
    """Requested more histogram segments than there are populated columns."""


class RadiometricDomainError(ThermArrayError, ValueError):
    """Apparent temperature outside the invertible image of the forward model."""


class PatchTooSmallError(ThermArrayError, ValueError):
    """ROI patch smaller than the pooling grid."""
