"""Exception hierarchy shared by all modules."""


class FkmcError(Exception):
    """Base class for every error raised by this package."""


class ExpressionError(FkmcError):
    """Malformed coefficient expression."""

    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} at position {position}"
        super().__init__(message)


class ExpressionSyntaxError(ExpressionError):
    pass


class UnknownIdentifierError(ExpressionError):
    pass


class VariableDimensionError(ExpressionError):
    """Variable ``xk`` with ``k`` larger than the declared dimension."""


class SpecError(FkmcError):
    """Problem-spec file could not be read or is incomplete."""


class ValidationError(FkmcError):
    def __init__(self, report):
        self.report = report
        super().__init__(report.message)


class TrajectoryFault(FkmcError):
    """Non-finite coefficient or failed factorization along a path."""


class SolverError(FkmcError):
    pass


class StabilityError(FkmcError):
    """Explicit finite-difference step violates its stability bound."""


class CacheError(FkmcError):
    """Endpoint cache has the wrong version or parameters."""
