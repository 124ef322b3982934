"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition or file contract.

    The CLI maps this to exit code 2; anything else is a runtime failure (1).
    """
