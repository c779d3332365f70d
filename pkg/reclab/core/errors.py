class ReclabError(RuntimeError):
    """Base class for every error raised by reclab."""


class InvalidInputError(ReclabError, ValueError):
    """Raised when an input violates a documented precondition."""


class DomainError(InvalidInputError):
    """Raised when a point lies outside the domain of the map."""


class EmptyRangeError(InvalidInputError):
    """Raised when the gap range tau(A) < delta < m is empty."""


class UndefinedConditionalError(InvalidInputError):
    """Raised when conditioning on a set of measure zero."""


class BudgetExceededError(ReclabError):
    """Raised when a computation would exceed a configured size budget."""

    def __init__(self, what: str, needed: int, budget: int):
        super().__init__(f"{what} needs {needed} but the budget is {budget}")
        self.what = what
        self.needed = needed
        self.budget = budget

    def __reduce__(self):
        return (type(self), (self.what, self.needed, self.budget))


class StabilityError(ReclabError):
    """Raised when a numerical consistency check fails."""
