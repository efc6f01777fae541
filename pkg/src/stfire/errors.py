"""Exception hierarchy shared by all stfire modules."""


class StfireError(Exception):
    """Base class for every error raised by stfire."""


class InvalidGeometryError(StfireError, ValueError):
    pass


class InvalidInputError(StfireError, ValueError):
    pass


class InvalidMethodError(StfireError, ValueError):
    pass


class OutOfRangeError(StfireError, ValueError):
    pass


class InsufficientDummiesError(StfireError, ValueError):
    pass


class NumericError(StfireError, ArithmeticError):
    pass


class InvalidKnotsError(StfireError, ValueError):
    pass


class SingularDesignError(StfireError, ValueError):
    """Design matrix is rank deficient; ``columns`` names the offenders."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = list(columns)


class ConvergenceError(StfireError, RuntimeError):
    """IRLS failed; ``trace`` holds the per-iteration penalized deviance."""

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class DataCoverageError(StfireError, ValueError):
    def __init__(self, message, points=()):
        super().__init__(message)
        self.points = list(points)


class MissingDayError(StfireError, ValueError):
    def __init__(self, message, days=()):
        super().__init__(message)
        self.days = list(days)


class DegenerateComponentError(StfireError, ValueError):
    pass


class BoundViolationError(StfireError, ValueError):
    pass


class EmptyPatternError(StfireError, ValueError):
    pass
