"""Pulse-coupled oscillator synchronization with an uncertain coupling
exponent: particle and mean-field solvers with polynomial-chaos uncertainty
propagation, plus the closed-form trapping, sensitivity, and death-state
quantities they are validated against.
"""

__version__ = "0.1.0"

from . import (analysis, deathstate, kinetic, particle,  # noqa: F401
               rootfind, uncertainty)
from .errors import (CapabilityError, CflError, ConfigError,  # noqa: F401
                     DomainError, NumericsError, WinfreeError)
