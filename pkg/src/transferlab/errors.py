"""Error taxonomy shared by the whole package.

Every error that should abort a run maps to a process exit code so the
command line front end can translate uncaught exceptions uniformly:

=====================  ====
error                  code
=====================  ====
ConfigError              2
DataError / ParseError   3
NumericError and kin     4
StorageError             5
=====================  ====
"""


class TransferLabError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(TransferLabError):
    """Bad or contradictory run configuration (unknown key, bad value)."""

    exit_code = 2


class DataError(TransferLabError):
    """Input data violates a documented expectation (gaps, bad dates)."""

    exit_code = 3


class ParseError(DataError):
    """A file could be read but not parsed into the expected shape."""


class NumericError(TransferLabError):
    """A numeric routine failed to converge or produced non-finite values."""

    exit_code = 4

    def __init__(self, message, *, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class ShapeError(NumericError):
    """Array arguments have incompatible or unexpected shapes."""


class ContractError(NumericError):
    """An internal invariant was violated (programming error, not input)."""


class StorageError(TransferLabError):
    """Reading or writing an artifact on disk failed."""

    exit_code = 5
