"""Exception types shared across the toolkit."""


class HraError(Exception):
    """Base class for toolkit errors."""


class InvalidArgument(HraError, ValueError):
    pass


class InvalidState(HraError, RuntimeError):
    pass


class ParseError(HraError, ValueError):
    """Map text could not be parsed.  Carries the offending line/column (1-based)."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}, column {column})" if column is not None else f" (line {line})"
        super().__init__(message + where)


class ConfigError(HraError, ValueError):
    pass


class NoFixedPointError(HraError, ArithmeticError):
    """Bellman evaluation equations have no unique solution (gamma == 1 with a recurrent loop)."""
