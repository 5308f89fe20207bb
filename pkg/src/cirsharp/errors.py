"""Exception hierarchy.

The CLI maps these onto exit codes: `ConfigError` -> 1, `DataError` -> 2,
`NumericalError` -> 3.
"""


class CirSharpError(Exception):
    pass


class ConfigError(CirSharpError, ValueError):
    pass


class DataError(CirSharpError, ValueError):
    pass


class MalformedRowError(DataError):
    def __init__(self, row, message):
        self.row = row
        super().__init__(f"row {row}: {message}")


class NumericalError(CirSharpError, ArithmeticError):
    pass


class DegenerateError(NumericalError):
    """Raised when an input has zero variance or a singular design."""


class ConvergenceError(NumericalError):
    pass


class UnsegmentableError(NumericalError):
    pass


class ShiftError(NumericalError):
    pass
