"""Exception types shared across the package."""


class ResdetError(Exception):
    """Base class for all package errors."""


class ValidationError(ResdetError):
    """Raised when inputs violate a documented precondition or invariant."""


class UnsupportedOperation(ResdetError):
    """Raised when an operation does not apply to the given location space."""


class InternalError(ResdetError):
    """Raised when an internal consistency check fails (a bug, not bad input)."""
