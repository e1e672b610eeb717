"""Exception types shared across the package."""


class KakeyaError(Exception):
    """Base class for all errors raised by this package."""


class SingularInput(KakeyaError):
    pass


class ParseError(KakeyaError):
    pass


class ValidationError(KakeyaError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class BudgetExceeded(KakeyaError):
    """Raised when an enumeration would exceed its cylinder budget.

    ``best`` carries the best partial result available at the time (for
    example the widest certified dimension bracket).
    """

    def __init__(self, message, budget=None, requested=None, best=None):
        super().__init__(message)
        self.budget = budget
        self.requested = requested
        self.best = best


class HypothesisViolated(KakeyaError):
    def __init__(self, message, which=None):
        super().__init__(message)
        self.which = which


class ResolutionError(KakeyaError):
    pass


class NearHyperplane(KakeyaError):
    pass


class NoEntry(KakeyaError):
    pass
