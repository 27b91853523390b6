"""Exception types shared across the package."""


class SegsitesError(Exception):
    """Base class for errors raised by this package."""


class CapacityError(SegsitesError, ValueError):
    """An argument exceeds a documented table or enumeration limit."""


class TruncationError(SegsitesError, ArithmeticError):
    """A series failed to converge before its hard term cap."""

    def __init__(self, message, terms, partial_sum, last_term):
        super().__init__(message)
        self.terms = terms
        self.partial_sum = partial_sum
        self.last_term = last_term


class PrecisionLossError(SegsitesError, ArithmeticError):
    """Cancellation in an alternating sum exceeded the double-precision budget."""

    def __init__(self, message, ratio):
        super().__init__(message)
        self.ratio = ratio


class IntegrityError(SegsitesError, AssertionError):
    """Two independent formulas for the same quantity disagreed.

    This signals a bug in the library, not a bad argument.
    """
