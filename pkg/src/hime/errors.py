"""Exception hierarchy shared across the package."""


class HimeError(Exception):
    """Base class for all package errors."""


class ContractError(HimeError, ValueError):
    """Inputs violate a documented precondition (sizes, ranges, normalization)."""


class DegenerateSupportError(HimeError, ArithmeticError):
    """Generalized escort of two distributions with (numerically) disjoint supports."""


class NumericRangeError(HimeError, ArithmeticError):
    """A tilt exponent is not finite; carries the offending index."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class InfeasibleConstraintError(HimeError, ValueError):
    """The requested mean constraint is outside the range reachable by any multiplier."""


class FlowBreakdownError(HimeError, ValueError):
    """A parameter flow left the valid parameter region."""

    def __init__(self, message, component=None):
        super().__init__(message)
        self.component = component


class SingularBlockError(HimeError, ArithmeticError):
    """A diagonal block could not be factorized."""
