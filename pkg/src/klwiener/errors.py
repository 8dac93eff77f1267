"""Exception types raised across the package."""


class KLError(Exception):
    """Base class for all package errors."""


class DomainError(KLError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class RangeError(KLError, ValueError):
    """An argument exceeds the numerically supported range."""


class ConvergenceError(KLError, RuntimeError):
    """An iterative procedure failed to converge.

    ``residual`` carries the best achieved residual when one is available.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class QuadratureError(ConvergenceError):
    """An adaptive quadrature did not reach its tolerance."""


class UnsupportedProcessError(KLError, ValueError):
    """A process family / dimension / operator combination is not available."""
