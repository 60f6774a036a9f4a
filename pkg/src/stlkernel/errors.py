"""Exception hierarchy shared by all stlkernel modules.

Every error carries an ``exit_code`` so the CLI can map error classes to
distinct process exit statuses.
"""


class StlKernelError(Exception):
    exit_code = 1


class ParseError(StlKernelError, ValueError):
    """Syntax error in formula text, with the byte offset of the failure."""

    exit_code = 2

    def __init__(self, message, offset=None, expected=None):
        self.offset = offset
        self.expected = expected
        detail = message if offset is None else f"{message} at offset {offset}"
        if expected:
            detail += f" (expected {expected})"
        super().__init__(detail)


class IntervalError(ParseError):
    """Malformed temporal interval: a >= b or a negative bound."""


class DimensionError(StlKernelError, ValueError):
    exit_code = 3


class HorizonError(StlKernelError, ValueError):
    """The temporal window is empty even after clamping to the trajectory end."""

    exit_code = 3


class DegenerateDimensionError(StlKernelError, ValueError):
    exit_code = 4


class DegenerateFormulaError(StlKernelError, ValueError):
    """A formula has zero self-kernel on the bank, so it cannot be normalized."""

    exit_code = 4

    def __init__(self, message, index=None, formula=None):
        self.index = index
        self.formula = formula
        super().__init__(message)


class ConditioningError(StlKernelError, ArithmeticError):
    exit_code = 5


class FingerprintMismatchError(StlKernelError, ValueError):
    exit_code = 6


class CsvFormatError(StlKernelError, ValueError):
    exit_code = 7

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ModelError(StlKernelError, ValueError):
    """Invalid reaction model or invalid configuration."""

    exit_code = 8
