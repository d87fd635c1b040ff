"""Exception hierarchy shared by every module of the package."""


class TDSError(Exception):
    """Base class for all errors raised by ``tdscert``."""


class InvalidInput(TDSError, ValueError):
    """Malformed user input (shapes, signs, file contents)."""


class DimensionMismatch(InvalidInput):
    pass


class DomainError(InvalidInput):
    pass


class OutOfRange(InvalidInput):
    pass


class NotScalar(InvalidInput):
    pass


class NumericalFailure(TDSError, ArithmeticError):
    """A numerical routine could not deliver a trustworthy result."""


class NonFinite(NumericalFailure):
    pass


class SingularMatrix(NumericalFailure):
    def __init__(self, message, rcond=None):
        super().__init__(message)
        self.rcond = rcond


class SingularM(SingularMatrix):
    """The 2m^2 x 2m^2 matrix M is numerically singular."""


class ConvergenceFailure(NumericalFailure):
    pass


class NoSignChange(NumericalFailure):
    pass


class PrecisionLoss(NumericalFailure):
    """Recursively computed Legendre moments disagree with quadrature."""

    def __init__(self, message, deviation=None):
        super().__init__(message)
        self.deviation = deviation


class LyapunovConditionViolated(TDSError):
    """The boundary matrix N is singular, so the delay Lyapunov matrix is not unique.

    This happens exactly when the system has two characteristic roots
    ``s1, s2`` with ``s1 + s2 = 0`` (for instance on a stability boundary).
    """

    def __init__(self, message, rcond=None):
        super().__init__(message)
        self.rcond = rcond


class OrderTooLarge(TDSError):
    def __init__(self, message, n_star=None, cap=None, constants=None):
        super().__init__(message)
        self.n_star = n_star
        self.cap = cap
        self.constants = constants
