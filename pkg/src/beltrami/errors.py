"""Exception taxonomy shared across the package."""


class BeltramiError(Exception):
    """Base class for every domain-level error raised by this package."""


class ParseError(BeltramiError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class DomainError(BeltramiError):
    """Evaluation outside the domain of an expression or series operation."""


class CriticalPointError(BeltramiError):
    """The gradient of f is below the configured floor; no chart exists here."""


class FrameError(BeltramiError):
    """The requested chart frame cannot be constructed at this base point."""


class BudgetError(BeltramiError):
    """Truncation orders are insufficient for the requested computation."""

    def __init__(self, message: str, required: dict | None = None):
        super().__init__(message)
        self.required = required or {}


class SeriesMismatchError(BeltramiError):
    """Operands disagree in variable list or truncation order."""
