"""Exception types shared across the package and mapped to CLI exit codes."""


class NnmixError(Exception):
    """Base class for package errors."""


class ConfigError(NnmixError):
    """Invalid configuration file or option combination (CLI exit code 2)."""


class DataError(NnmixError):
    """Invalid input data: schema violations, digest mismatches (exit code 3)."""


class NumericalError(NnmixError):
    """Numerical failure: factorization, root bracketing, non-finite targets
    (exit code 4)."""
