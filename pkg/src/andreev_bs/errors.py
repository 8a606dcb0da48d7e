"""
Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: configuration and domain problems exit
with 2, numerical failures with 3.
"""

from __future__ import annotations


class AndreevError(Exception):
    """Base class for every error raised by andreev_bs."""


class ConfigError(AndreevError, ValueError):
    """Invalid configuration document or parameter set.

    Attributes:
        key: Offending key (or None when the whole document is at fault).
        line: Line number for parse errors, when known.
    """

    def __init__(self, message: str, *, key: str | None = None, line: int | None = None):
        super().__init__(message)
        self.key = key
        self.line = line


class ResolutionError(ConfigError):
    """Grid too coarse for the requested semiclassical parameter."""

    def __init__(self, message: str, *, required_points: int):
        super().__init__(message, key="grid_points")
        self.required_points = required_points


class DomainError(AndreevError, ValueError):
    """Argument outside the domain of an operation."""


class ProfileError(AndreevError):
    """The profile does not provide the requested geometry (no branching point)."""


class PoleError(AndreevError, ZeroDivisionError):
    """Evaluation at a pole of Gamma or of a hypergeometric series."""


class NumericalError(AndreevError, RuntimeError):
    """Numerical failure: ODE step underflow, eigensolver breakdown, inconsistency."""
