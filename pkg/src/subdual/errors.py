"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class GridMismatchError(ValueError):
    """Array shapes do not match the grid they are supposed to live on."""


class SingularSystemError(ArithmeticError):
    """A triangular system has a vanishing pivot."""


class PreconditionError(ValueError):
    """Input violates a documented precondition (e.g. an unbounded kernel
    passed where a regularized one is required)."""


class MonotonicityError(ArithmeticError):
    """A computed relaxation function fails to be nonincreasing."""


class SolverError(RuntimeError):
    """A nonlinear time step could not be solved.

    ``diagnostics`` carries the step index and residual history.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class PositivityError(RuntimeError):
    """A monitored solution dropped below its allowed negative floor."""

    def __init__(self, message, step=None, node=None, value=None):
        super().__init__(message)
        self.step = step
        self.node = node
        self.value = value


class ConfigError(ValueError):
    """Configuration could not be parsed or validated.

    All validation problems are collected in ``errors``.
    """

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
