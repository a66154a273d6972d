"""Exception hierarchy shared by the solver, the circuit simulator and the CLI."""


class QLBMError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 4


class ConfigurationError(QLBMError, ValueError):
    """Malformed or unsupported configuration (unknown velocity set, bad extent, ...)."""

    exit_code = 2


class DomainError(QLBMError, ValueError):
    """Inputs outside the mathematical domain of an operation."""

    exit_code = 3


class UsageError(QLBMError, ValueError):
    """API misuse: mismatched lengths, identical control/target, oversized enumeration."""

    exit_code = 3


class InternalError(QLBMError, RuntimeError):
    """Numerical breakdown that should not happen for valid inputs."""

    exit_code = 4
