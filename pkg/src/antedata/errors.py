"""Exception hierarchy shared by every module."""


class AntedataError(Exception):
    """Base class for all library errors."""


class DomainError(AntedataError, ValueError):
    """An argument lies outside its legal domain."""


class GridMismatchError(AntedataError, ValueError):
    pass


class DegenerateDensityError(AntedataError, ArithmeticError):
    """Every log-weight is -inf, so there is nothing to normalize."""


class DivergenceError(AntedataError, ArithmeticError):
    """A normalizer overflowed or the kernel is not integrable on the grid."""


class SupportMismatchError(AntedataError, ValueError):
    pass


class UnknownGroupError(AntedataError, KeyError):
    pass


class DowndateError(AntedataError, ValueError):
    """Removing a group would push hyperparameters out of their legal range."""


class FamilyEscapesGridError(AntedataError, ArithmeticError):
    pass


class LineSearchError(AntedataError, ArithmeticError):
    pass


class ConfigError(AntedataError, ValueError):
    pass
