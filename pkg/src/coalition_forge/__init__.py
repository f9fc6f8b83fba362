"""Collaboration equilibrium for networks of data-holding clients."""
from .errors import BudgetError, ConfigError, NumericalError, ShapeError
from .kernels import BACKEND

__version__ = "0.1.0"
