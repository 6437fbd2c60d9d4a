"""Exception types raised across the package."""


class KLSNMFError(Exception):
    """Base class for errors raised by klsnmf."""


class InputError(KLSNMFError, ValueError):
    """Input data or matrix violates a documented precondition."""


class ParameterError(KLSNMFError, ValueError):
    """A numeric parameter is out of its admissible range."""


class DataFormatError(InputError):
    """A dense text matrix could not be parsed.

    ``row`` and ``column`` are 1-based positions in the file when known.
    """

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class NumericalFailure(KLSNMFError, RuntimeError):
    """The solver produced a non-finite value. ``trace`` holds progress so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
