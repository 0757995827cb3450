"""Exception and warning types shared across the library."""


class KmvError(Exception):
    """Base class for all library errors."""


class InputError(KmvError, ValueError):
    """Malformed or non-finite input data."""


class DimensionError(KmvError, ValueError):
    """Shapes or requested ranks are inconsistent."""


class RankError(KmvError):
    """A matrix is numerically rank deficient.

    Parameters
    ----------
    message : str
        Human readable description.
    rank : int, optional
        Estimated numerical rank.
    """

    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class NumericalError(KmvError, ArithmeticError):
    """A factorization or iteration failed numerically."""


class BranchError(NumericalError):
    """Matrix function requested on a branch cut."""


class PreconditionError(KmvError, ValueError):
    """A documented precondition of an operation is violated."""


class ParseError(KmvError, ValueError):
    """A data file is malformed."""


class ConfigError(KmvError, ValueError):
    """An experiment configuration is invalid."""


class KmvWarning(UserWarning):
    """Base class for library warnings."""


class ConvergenceWarning(KmvWarning):
    """An iterative method stopped before meeting its tolerance."""


class RangeError(KmvError, ValueError):
    """An argument lies outside the admissible range."""
