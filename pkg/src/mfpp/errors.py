"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where a quantity is defined."""


class NumericalFailure(ArithmeticError):
    """A numerical method could not reach its target accuracy.

    ``bound`` carries the best error bound that was achieved, when one is known.
    """

    def __init__(self, message, bound=None):
        super().__init__(message)
        self.bound = bound
