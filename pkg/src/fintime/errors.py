"""Exception hierarchy shared across the package."""


class FintimeError(Exception):
    """Base class for all package errors."""


class InvalidMatrix(FintimeError, ValueError):
    pass


class NotPositiveDefinite(FintimeError, ValueError):
    pass


class DimensionError(FintimeError, ValueError):
    pass


class ZeroGradient(FintimeError, ArithmeticError):
    """Raised when a flow is evaluated at (or numerically at) a stationary point."""


class AlphaOutOfRange(FintimeError, ValueError):
    pass


class LeftDomain(FintimeError):
    """The trajectory left the region where the Hessian is positive definite."""


class StepUnderflow(FintimeError):
    pass


class NotConverged(FintimeError):
    pass
