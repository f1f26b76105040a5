"""Exception hierarchy shared by all modules.

The CLI maps :class:`ValidationError` (and its subclasses) to exit code 1 and
:class:`NumericError` to exit code 2.
"""


class ValidationError(ValueError):
    """Bad input: wrong shapes, invalid parameters, violated preconditions."""


class IngestionError(ValidationError):
    """A point-cloud file could not be read or parsed."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values or failed to converge."""
