"""Norm inflation for 3D Navier-Stokes in critical spaces: exact first iterate, norm estimators, spectral solver."""

__version__ = "0.1.0"

from .errors import BudgetExceeded, ConfigError, NumericalError  # noqa: F401
