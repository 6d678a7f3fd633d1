"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class EventParseError(ValidationError):
    """Malformed line in an event-log CSV."""

    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


class NumericError(ArithmeticError):
    """A statistical computation is numerically ill-posed."""
