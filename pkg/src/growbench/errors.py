"""Exception types shared across the package."""


class GrowbenchError(Exception):
    """Base class for all package errors."""


class DimensionError(GrowbenchError, ValueError):
    pass


class NumericError(GrowbenchError, ArithmeticError):
    pass


class StateError(GrowbenchError, RuntimeError):
    pass


class PreconditionError(GrowbenchError, ValueError):
    pass


class DivergenceError(NumericError):
    """Training loss became non-finite."""

    def __init__(self, step: int, loss: float):
        super().__init__(f"loss became non-finite ({loss!r}) at step {step}")
        self.step = step
        self.loss = loss


class ConfigError(GrowbenchError, ValueError):
    pass
