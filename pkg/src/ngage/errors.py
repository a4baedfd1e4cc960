"""Exception hierarchy shared across the package.

The CLI maps ValidationError (and subclasses) to exit code 1 and
DataIOError / OSError to exit code 2.
"""


class NgageError(Exception):
    """Base class for all package errors."""


class ValidationError(NgageError):
    """Input violates a documented precondition or invariant."""


class ParseError(ValidationError):
    """File content cannot be parsed; message names file and line."""

    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class EmptySliceError(ValidationError):
    """Requested time slice does not overlap the trace."""


class DecompositionError(NgageError):
    """EDA decomposition failed to converge; carries the last gap."""

    def __init__(self, message, gap=None):
        self.gap = gap
        super().__init__(message)


class DataIOError(NgageError):
    """Filesystem-level problem (missing path, unwritable directory)."""
