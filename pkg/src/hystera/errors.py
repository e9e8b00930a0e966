"""Exception hierarchy shared by all hystera modules."""


class HysteraError(Exception):
    """Base class for every error raised by the package."""


class DomainError(HysteraError, ValueError):
    """An argument lies outside the domain where a relation is defined."""


class ConstitutiveInconsistencyError(HysteraError):
    """The closure relations violate the scanning-curve consistency criterion."""


class NumericError(HysteraError, ArithmeticError):
    """A numerical kernel (quadrature, linear solve, root finding) failed."""


class DegeneracyError(NumericError):
    """A diffusion coefficient vanished where a positive value is required."""


class StateCorruptionError(NumericError):
    """Non-finite values appeared in a solver state."""


class NonContractionError(NumericError):
    """The fixed-point iteration failed to contract for the current step size."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SolverAbort(HysteraError):
    """The time march gave up after exhausting its step-halving budget."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump


class PreconditionError(HysteraError, ValueError):
    """Input data violate the hypotheses an operation relies on."""


class ConfigError(HysteraError, ValueError):
    """A run configuration could not be parsed or validated."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
