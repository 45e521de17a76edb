"""Exception types raised across the package."""


class EkimfError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(EkimfError, ValueError):
    """A matrix expected to be symmetric positive definite is not."""


class RankDeficient(EkimfError, ValueError):
    """The linear part of the forward map lacks full column rank."""


class SingularUpdate(EkimfError, ArithmeticError):
    """The Kalman gain system could not be factorized."""


class Diverged(EkimfError, ArithmeticError):
    """A particle norm exceeded the divergence guard."""

    def __init__(self, message, step=None, particle=None):
        super().__init__(message)
        self.step = step
        self.particle = particle


class NonlinearModel(EkimfError, ValueError):
    """A closed-form routine that needs a linear model received a nonlinear one."""


class EmptyInput(EkimfError, ValueError):
    pass


class SizeMismatch(EkimfError, ValueError):
    pass


class TooLarge(EkimfError, ValueError):
    pass


class DegenerateFit(EkimfError, ValueError):
    """Rate fit impossible: non-positive means or too few distinct sizes."""


class ConfigError(EkimfError, ValueError):
    pass
