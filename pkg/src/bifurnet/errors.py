"""Exception types raised across the package."""


class BifurnetError(Exception):
    """Base class for all package errors."""


class DimensionError(BifurnetError, ValueError):
    """Array shapes do not conform, or contain non-finite entries."""


class SingularMatrixError(BifurnetError, ArithmeticError):
    """A linear solve hit a pivot below the singularity threshold."""


class ConvergenceError(BifurnetError, RuntimeError):
    """An iterative solver stopped without meeting its tolerance."""

    def __init__(self, message, x=None, residual_norm=None, iterations=None):
        super().__init__(message)
        self.x = x
        self.residual_norm = residual_norm
        self.iterations = iterations


class DivergenceError(BifurnetError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class SearchError(BifurnetError, RuntimeError):
    """Every restart of the bifurcation search failed."""


class GenerationError(BifurnetError, RuntimeError):
    """Dataset generation could not produce the requested samples."""


class ParseError(BifurnetError, ValueError):
    """A model, dataset or fixture file is malformed."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
