"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class BecError(Exception):
    exit_code = 2


class ConfigError(BecError, ValueError):
    exit_code = 1


class NumericRangeError(BecError, ArithmeticError):
    exit_code = 2


class IntegrationError(BecError, RuntimeError):
    exit_code = 2


class ReducibleChainError(BecError, ValueError):
    """Some loss rate vanishes, so the chain has no unique stationary state."""

    exit_code = 2


class ConsistencyError(BecError, ValueError):
    """Inputs built from different spectra, temperatures or atom numbers."""

    exit_code = 2


class ResourceLimitError(BecError, MemoryError):
    exit_code = 3


class OverlapRangeError(BecError, IndexError):
    exit_code = 2
