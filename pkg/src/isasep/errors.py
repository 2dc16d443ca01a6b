"""Exception types raised across the toolkit."""


class IsaSepError(Exception):
    """Base class for all toolkit errors."""


class SingularCovariance(IsaSepError, ValueError):
    pass


class NotABijection(IsaSepError, ValueError):
    pass


class SingularLambda(IsaSepError, ValueError):
    pass


class DimensionMismatch(IsaSepError, ValueError):
    pass


class ShapeMismatch(IsaSepError, ValueError):
    pass


class ZeroBlockRow(IsaSepError, ValueError):
    pass


class DegenerateSample(IsaSepError, ValueError):
    pass


class TooFewSamples(IsaSepError, ValueError):
    pass


class NotWhitened(IsaSepError, ValueError):
    pass


class NonFiniteUpdate(IsaSepError, ArithmeticError):
    pass


class SearchSpaceTooLarge(IsaSepError, ValueError):
    pass


class InfeasibleDims(IsaSepError, ValueError):
    pass


class ConfigError(IsaSepError, ValueError):
    """Invalid experiment configuration.

    ``line`` is the 1-based line number of the offending entry when known.
    """

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None and line is not None:
            where = f"{path}:{line}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(f"{where}{message}")
