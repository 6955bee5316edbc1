"""Exception types shared across the toolkit.

InputError maps to CLI exit code 2, NumericError to exit code 3.
"""


class InputError(ValueError):
    """Bad user-supplied data: malformed files, schema violations, invalid flags."""


class NumericError(RuntimeError):
    """Numeric failure: singular systems, rank-deficient designs, non-finite results."""
