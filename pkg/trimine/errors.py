"""Exception hierarchy for trimine.

Library code raises these; only the command-line front end turns them
into exit codes.
"""


class TrimineError(Exception):
    """Base class for every error raised by trimine."""

    exit_code = 2


class UsageError(TrimineError):
    """Bad arguments, violated preconditions, or invalid data."""


class PrerequisiteError(UsageError):
    """A pipeline stage was run before the artifact it depends on exists."""

    def __init__(self, message: str, artifact: str | None = None):
        super().__init__(message)
        self.artifact = artifact


class FormatError(TrimineError):
    """A file does not match its declared format.

    Binary readers set ``offset`` (byte position), CSV readers set ``line``
    (1-based line number).
    """

    def __init__(self, message: str, offset: int | None = None, line: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        elif line is not None:
            message = f"{message} (at line {line})"
        super().__init__(message)
        self.offset = offset
        self.line = line


class NumericError(TrimineError):
    """Non-finite loss or gradient, or a failed gradient check."""

    exit_code = 3
