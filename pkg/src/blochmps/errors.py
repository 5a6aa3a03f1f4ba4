"""Exception hierarchy shared by the library and the CLI."""


class BlochMPSError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 1


class ValidationError(BlochMPSError, ValueError):
    """Bad input: wrong shapes, out-of-range indices, inconsistent config."""

    exit_code = 2

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class NumericalError(BlochMPSError, ArithmeticError):
    """A numerical contract was violated (singular metric, lost Hermiticity, ...)."""

    exit_code = 3


class ResourceError(BlochMPSError, MemoryError):
    """Refused because the job would exceed a configured resource budget."""

    exit_code = 4


class NullSpaceWarning(UserWarning):
    """Discarded-direction count differs from the expected null-space dimension."""


class ParityWarning(UserWarning):
    """A returned state does not have the parity of the sector it was computed in."""
