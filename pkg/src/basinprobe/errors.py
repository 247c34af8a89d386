"""Exception types shared across the package."""


class BasinProbeError(Exception):
    """Base class; the CLI maps these to exit code 1."""


class ShapeError(BasinProbeError, ValueError):
    pass


class NumericError(BasinProbeError, ArithmeticError):
    pass


class DivergenceError(NumericError):
    def __init__(self, message, last_finite_epoch):
        super().__init__(message)
        self.last_finite_epoch = last_finite_epoch


class FormatError(BasinProbeError, ValueError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class InvalidSpecError(BasinProbeError, ValueError):
    pass


class UnsupportedError(BasinProbeError, NotImplementedError):
    pass


class DenseCapError(BasinProbeError, MemoryError):
    pass


class ConvergenceError(BasinProbeError, RuntimeError):
    pass


class UndefinedMetricError(BasinProbeError, ValueError):
    pass


class SolverError(BasinProbeError, ArithmeticError):
    pass


class InsufficientDataError(BasinProbeError, ValueError):
    pass
