"""Shared exception types."""


class ValidationError(ValueError):
    """Invalid parameters or malformed input (CLI exit code 2)."""


class BudgetExceededError(RuntimeError):
    """Instance size exceeds an enumeration or compute guard (CLI exit code 3)."""


class NumericalError(RuntimeError):
    """A numerical routine failed to converge or produced inconsistent output."""
