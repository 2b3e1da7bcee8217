"""Shared exception types, mapped to CLI exit codes by the cli module."""


class ConfigError(ValueError):
    """Invalid user-supplied configuration, file, or argument."""


class NumericalError(RuntimeError):
    """Non-finite values or a numerically invalid matrix was produced."""


class AssumptionError(RuntimeError):
    """A mathematical precondition (kernel match, PSD-ness, ...) is violated."""
