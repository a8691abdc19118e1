"""Exception types raised by rlgp."""


class RLGPError(Exception):
    """Base class for all package errors."""


class InvalidInputError(RLGPError, ValueError):
    """Input data or arguments violate a precondition."""


class SchemaError(InvalidInputError):
    """A CSV file does not match the expected column layout.

    ``row`` and ``column`` locate the offending cell when known (``row`` is
    the 1-based data row, header excluded).
    """

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class ConfigError(RLGPError, ValueError):
    """A run or benchmark configuration cannot be resolved."""


class NumericalError(RLGPError, ArithmeticError):
    """A factorization or solve failed, or produced non-finite values.

    ``context`` carries diagnostics such as the iteration index and the
    parameter snapshot at failure.
    """

    def __init__(self, message, **context):
        if context:
            detail = ", ".join(f"{k}={v!r}" for k, v in context.items())
            message = f"{message} [{detail}]"
        super().__init__(message)
        self.context = context
