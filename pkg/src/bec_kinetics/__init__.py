"""Number-conserving master-equation kinetics of Bose-Einstein condensation
in a harmonic trap.

The simulated object is the condensate number distribution p_N(N0, t) of a
gas of exactly N bosons; the non-condensate is a canonical ideal gas that
rethermalizes instantly at temperature T.
"""

from .errors import (
    BecError,
    ConfigError,
    ConsistencyError,
    IntegrationError,
    NumericRangeError,
    OverlapRangeError,
    ReducibleChainError,
    ResourceLimitError,
)

__version__ = "0.1.0"

__all__ = [
    "BecError",
    "ConfigError",
    "ConsistencyError",
    "IntegrationError",
    "NumericRangeError",
    "OverlapRangeError",
    "ReducibleChainError",
    "ResourceLimitError",
    "__version__",
]
