"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes, so new error types should
subclass one of the three categories below.
"""


class PathaggError(Exception):
    """Base class for all package errors."""


class ConfigError(PathaggError):
    """Invalid or inconsistent configuration (exit code 2)."""


class DataError(PathaggError):
    """Bad input data or missing upstream artifact (exit code 3)."""


class NumericError(PathaggError):
    """Numerical failure such as NaN loss or infinite divergence (exit code 4)."""
