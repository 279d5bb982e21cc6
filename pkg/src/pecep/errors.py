"""Exception types raised across the package."""


class PecepError(Exception):
    """Base class for all package errors."""


class InvalidInputError(PecepError, ValueError):
    pass


class InsufficientSamplesError(InvalidInputError):
    pass


class InsufficientDataError(InvalidInputError):
    pass


class UnderdeterminedSystemError(InvalidInputError):
    pass


class SingularMatrixError(PecepError, ArithmeticError):
    pass


class InvalidCovarianceError(InvalidInputError):
    pass


class DegenerateSpectrumError(InvalidInputError):
    pass


class InvalidConfigError(PecepError, ValueError):
    pass


class UnstableProcessError(PecepError, RuntimeError):
    pass


class DivergenceError(PecepError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, loss):
        super().__init__(f"non-finite training loss {loss!r} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss
