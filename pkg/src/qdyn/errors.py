"""Exception hierarchy shared by all qdyn modules."""


class QdynError(Exception):
    """Base class for every error raised by qdyn."""


class ValidationError(QdynError, ValueError):
    """Inputs violate a documented precondition."""


class InvalidBoundsError(ValidationError):
    pass


class NonFinitePotentialError(ValidationError):
    pass


class GridMismatchError(ValidationError):
    pass


class UnknownFunctionError(ValidationError):
    pass


class EmptyExpansionError(ValidationError):
    pass


class NumericalError(QdynError, ArithmeticError):
    """A computation produced unusable numbers."""


class InstabilityError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class PopulationExtinctionError(NumericalError):
    pass


class BudgetExhausted(QdynError):
    """The objective-evaluation budget ran out."""
