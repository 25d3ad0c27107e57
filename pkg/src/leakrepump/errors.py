"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input lies outside the domain an operation is defined on."""


class InsufficientDataError(DomainError):
    """A fit was asked to determine more parameters than the data supports."""


class ConstraintViolation(DomainError):
    """Parameters violate a probability (simplex) constraint."""


class InfeasibleTargetError(DomainError):
    """A requested suppression target lies below the achievable floor."""

    def __init__(self, message, floor):
        super().__init__(message)
        self.floor = floor


class ConvergenceError(RuntimeError):
    """A numerical routine did not meet its tolerance within its work cap."""
