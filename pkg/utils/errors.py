"""Error hierarchy shared by every package.

Each error carries the process exit code main.py returns for it:
0 success, 1 usage/config, 2 data/format, 3 numerical failure.
"""

from typing import Dict, Optional, Tuple


class FUNetError(Exception):
    """Base class for all toolkit errors."""
    exit_code = 1


class ConfigError(FUNetError):
    """Invalid configuration value, unknown key, or invalid spec/hyperparameters."""
    exit_code = 1

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class UsageError(FUNetError):
    """API or CLI misuse."""
    exit_code = 1


class ShapeError(FUNetError, ValueError):
    """Tensor shape contract violation."""
    exit_code = 2

    def __init__(self, message: str, dimension: Optional[str] = None,
                 expected=None, actual=None):
        super().__init__(message)
        self.dimension = dimension
        self.expected = expected
        self.actual = actual


class DataFormatError(FUNetError):
    """Malformed or truncated file, or unreadable artifact."""
    exit_code = 2


class GenerationError(FUNetError):
    """Synthetic geometry could not be produced within the retry budget."""
    exit_code = 2


class LabelIndexError(FUNetError, IndexError):
    """Label value outside [0, num_classes)."""
    exit_code = 2

    def __init__(self, message: str, pixel: Optional[Tuple[int, ...]] = None,
                 value: Optional[int] = None):
        super().__init__(message)
        self.pixel = pixel
        self.value = value


class DomainError(FUNetError, ValueError):
    """Input outside the mathematical domain of a function."""
    exit_code = 3


class NumericalError(FUNetError, ArithmeticError):
    """NaN/Inf detected in a tensor or the loss."""
    exit_code = 3

    def __init__(self, message: str, iteration: Optional[int] = None,
                 parameter_norms: Optional[Dict[str, float]] = None):
        super().__init__(message)
        self.iteration = iteration
        self.parameter_norms = parameter_norms or {}


def shape_mismatch(what: str, dimension: str, expected, actual) -> ShapeError:
    """Build a ShapeError naming the offending dimension."""
    return ShapeError(
        f"{what}: dimension '{dimension}' expected {expected}, got {actual}",
        dimension=dimension, expected=expected, actual=actual
    )
