"""Exception taxonomy shared by all subsystems.

The CLI maps these onto exit codes: usage/config problems exit 1,
invariant and leakage violations exit 2, numeric failures exit 3.
"""


class RegimecastError(Exception):
    """Base class for all package errors."""


class DimensionError(RegimecastError):
    """Tensor or array shapes incompatible with an operation's contract."""


class NumericError(RegimecastError):
    """A computation produced NaN/Inf or left a function's domain."""


class DataError(RegimecastError):
    """Input data violates a structural invariant."""


class ParseError(DataError):
    """Malformed input file row; message carries the line number."""


class OrderingError(DataError):
    """Dates or stages out of required order."""


class WarmupError(DataError):
    """Not enough history to compute a value at the requested position."""


class LeakageError(RegimecastError):
    """An operation attempted to fit statistics on post-training data."""


class ConfigError(RegimecastError):
    """Invalid or inconsistent run configuration."""


class CheckpointError(RegimecastError):
    """Checkpoint cannot be read or does not match the config."""


class CheckpointCorruptError(CheckpointError):
    """Checkpoint bytes fail the length/checksum record."""
