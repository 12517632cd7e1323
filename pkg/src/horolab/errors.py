"""Exception types shared across the package."""


class ValidationError(ValueError):
    """An input is not a valid point, element, law or configuration."""


class NumericalError(ArithmeticError):
    """A floating-point computation could not be carried out reliably."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NonConvergenceError(ArithmeticError):
    """An iterative limit did not settle within its budget."""

    def __init__(self, message, last_values=(), value=None):
        super().__init__(message)
        self.last_values = tuple(last_values)
        self.value = value


class NotBallisticError(ValueError):
    """The estimated drift is too small for a direction to be meaningful."""
