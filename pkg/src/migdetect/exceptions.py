"""Exception hierarchy.

Validation problems (bad shapes, non-HPD input, malformed files) derive from
``ValueError`` so that generic callers can catch them the usual way. Numerical
failures (non-convergence, factorization breakdown) derive from
``ArithmeticError``. The CLI maps the first family to exit code 1 and the
second to exit code 2.
"""


class MIGError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(MIGError, ValueError):
    """Input does not satisfy a documented precondition."""


class DomainError(ValidationError):
    """Input lies outside the domain of a matrix function (e.g. not HPD)."""


class DegenerateInputError(ValidationError):
    """Input is well-formed but carries no information (e.g. all zeros)."""


class ParseError(ValidationError):
    """A matrix or config file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericError(MIGError, ArithmeticError):
    """An iterative or factorization routine failed.

    Parameters
    ----------
    message : str
        Human readable description.
    iterations : int, optional
        Number of iterations performed before giving up.
    residual : float, optional
        Final residual of the iteration.
    """

    def __init__(self, message, iterations=None, residual=None):
        self.iterations = iterations
        self.residual = residual
        extra = []
        if iterations is not None:
            extra.append(f"iterations={iterations}")
        if residual is not None:
            extra.append(f"residual={residual:.3e}")
        if extra:
            message = f"{message} ({', '.join(extra)})"
        super().__init__(message)
