"""Exception types raised across the package."""


class OpsplitError(Exception):
    """Base class for all errors raised by opsplit."""


class DimensionError(OpsplitError, ValueError):
    pass


class NumericalError(OpsplitError, ArithmeticError):
    pass


class SetValuedError(OpsplitError):
    """Raised when a forward evaluation is requested from a set-valued operator."""


class NonPowerOfTwoError(OpsplitError, ValueError):
    pass


class NotMonotoneError(OpsplitError, ValueError):
    pass


class NonConvergedReference(OpsplitError):
    pass


class MalformedSystem(OpsplitError, ValueError):
    pass


class ZeroStart(OpsplitError, ValueError):
    pass


class InfeasibleParams(OpsplitError, ValueError):
    pass


class IterationError(OpsplitError):
    """An operator failed inside the fixed-point loop; ``iteration`` is the failing index."""

    def __init__(self, iteration, message):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration
