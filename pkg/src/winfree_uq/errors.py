"""Semantic exception hierarchy.

ConfigError maps to CLI exit code 2 (bad input, caught before any numerics);
everything else raised during a computation maps to exit code 3.
"""


class WinfreeError(Exception):
    """Base class for all package errors."""


class ConfigError(WinfreeError, ValueError):
    """Invalid configuration, arguments, or type mismatch (CLI exit code 2)."""


class DomainError(WinfreeError, ValueError):
    """Arguments outside the mathematical domain of an operation."""


class CflError(DomainError):
    """Transport step size violates the stability restriction."""


class CapabilityError(WinfreeError):
    """Requested quantity exceeds what the discretization can represent."""


class NumericsError(WinfreeError, RuntimeError):
    """Numerical failure at run time: lost bracket, NaN blow-up, no convergence."""
