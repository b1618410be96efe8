"""Exception hierarchy shared across the package.

Validation errors map to CLI exit code 2, numerical failures to exit code 3.
"""


class BsgpError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(BsgpError):
    """An argument violates a documented precondition."""


class DataError(BsgpError):
    """Input data violate a schema or consistency rule."""


class NumericalError(BsgpError):
    """A numerical operation failed (e.g. Cholesky on an indefinite matrix)."""
