"""SI constants used throughout (CODATA values via scipy)."""

from scipy import constants as _c

HBAR = _c.hbar
KB = _c.k
ZETA3 = 1.2020569031595942
RB87_MASS = 1.44316e-25  # kg
