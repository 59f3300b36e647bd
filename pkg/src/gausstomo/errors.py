"""Exception hierarchy shared across the package."""


class TomographyError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(TomographyError, ValueError):
    pass


class NumericalError(TomographyError, ArithmeticError):
    pass


class RankDeficientError(TomographyError):
    """Raised when a measurement map cannot be inverted on the requested subspace.

    ``report`` carries the numerical rank, the target dimension and the
    smallest retained singular values so that callers can print diagnostics.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = dict(report or {})


class ResourceError(TomographyError, MemoryError):
    pass
