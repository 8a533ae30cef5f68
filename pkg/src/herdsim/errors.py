"""Exception hierarchy shared by every module.

The CLI maps these onto distinct exit codes, so library code raises the most
specific class that applies.
"""


class HerdsimError(Exception):
    """Base class for all package errors."""


class ArgumentError(HerdsimError, ValueError):
    """An argument violates a documented precondition."""


class DomainError(HerdsimError, ValueError):
    """A value lies outside the mathematical domain of a function."""


class SingularityError(DomainError):
    """A formula diverges at the supplied input (e.g. x = 1 in y = x/(1-x))."""


class DegenerateInputError(ArgumentError):
    """Input data carries no usable information (all zeros, constant, ...)."""


class IntegrationError(HerdsimError, ArithmeticError):
    """Numerical integration produced a non-finite state."""

    def __init__(self, message, state=None, time=None):
        super().__init__(message)
        self.state = state
        self.time = time


class BoundaryError(IntegrationError):
    """The path reached a boundary whose policy is ``error``."""


class ParseError(HerdsimError, ValueError):
    """Malformed interchange file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
