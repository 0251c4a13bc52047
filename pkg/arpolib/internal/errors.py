"""
Exceptions raised by the library.
Every exception derives from ``ArpoError`` and from the closest builtin,
so callers may catch either of them.
"""

from typing import Any, Dict, Optional

__all__ = [
    "ArpoError",
    "ConfigurationError",
    "SplitViolationError",
    "EpisodeFinishedError",
    "DomainError",
    "ShapeError",
    "NumericGuardError",
    "NonFiniteLossError",
    "ClusteringError",
    "AlternationError",
    "CheckpointError",
]


class ArpoError(Exception):
    pass


class ConfigurationError(ArpoError, ValueError):
    pass


class SplitViolationError(ArpoError, ValueError):
    pass


class EpisodeFinishedError(ArpoError, RuntimeError):
    pass


class DomainError(ArpoError, ValueError):
    pass


class ShapeError(ArpoError, ValueError):
    pass


class NumericGuardError(ArpoError, ArithmeticError):
    pass


class NonFiniteLossError(ArpoError, FloatingPointError):
    """
    Raised before an optimizer step when a loss is NaN or infinite.

    :param message: Human readable description.
    :param diagnostics: Loss components at the moment of failure.
    """

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ClusteringError(ArpoError, RuntimeError):
    pass


class AlternationError(ArpoError, RuntimeError):
    pass


class CheckpointError(ArpoError, RuntimeError):
    pass
