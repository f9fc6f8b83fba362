"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value or malformed config document."""


class ShapeError(ValueError):
    """Array dimensions do not line up."""


class NumericalError(ArithmeticError):
    """A linear system could not be solved."""


class BudgetError(RuntimeError):
    """A brute-force routine was asked to exceed its size cap."""
