"""Exception hierarchy shared across the toolkit."""


class SubalignError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(SubalignError, ValueError):
    """An argument violates a documented precondition."""


class DimensionMismatchError(ParameterError):
    """Operands have incompatible shapes."""


class NumericalError(SubalignError, ArithmeticError):
    """A computation produced non-finite values or failed to converge."""


class SvdConvergenceError(NumericalError):
    """SVD failed to converge; carries the number of drivers attempted."""

    def __init__(self, message, attempts):
        super().__init__(message)
        self.attempts = attempts


class FormatError(SubalignError, IOError):
    """A binary or text artifact does not conform to its on-disk schema."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class VersionMismatchError(FormatError):
    """File carries an unsupported format version."""


class TruncatedFileError(FormatError):
    """File ends before the declared payload is complete."""


class ShapeOverflowError(FormatError):
    """Declared matrix shape is implausibly large for this file."""


class ChecksumError(FormatError):
    """Trailing checksum does not match the file contents."""
