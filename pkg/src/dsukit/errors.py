"""Exception hierarchy shared by all pipeline stages.

The CLI maps these onto process exit codes: config errors exit 2, data
errors exit 3, numeric errors exit 4.
"""


class DsukitError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(DsukitError):
    """Invalid configuration: bad CLI arguments, malformed config files,
    missing declared inputs, unsatisfiable parameter combinations."""

    exit_code = 2


class DataError(DsukitError):
    """Invalid or inconsistent data encountered while processing."""

    exit_code = 3


class ValidationError(DataError):
    """An input value violates a documented precondition or invariant."""


class FormatError(DataError):
    """A binary or JSONL artifact does not match its documented layout."""


class TruncationError(FormatError):
    """A binary artifact ends before its payload does.

    Carries the byte offset at which the file ended and how many bytes
    were expected.
    """

    def __init__(self, message: str, offset: int, expected: int):
        super().__init__(message)
        self.offset = offset
        self.expected = expected


class ParseError(DataError):
    """Token text could not be parsed; carries the character offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(message)
        self.offset = offset


class CapacityError(DataError):
    """Not enough data to satisfy the request (e.g. fewer frames than
    clusters)."""


class TemplateError(DataError):
    """A prompt template was instantiated with missing or invalid fields."""


class NumericError(DsukitError):
    """A numerical guarantee was violated (non-finite value where finite
    is required, monotonicity breach, factorization failure)."""

    exit_code = 4
