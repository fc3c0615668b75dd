"""Utility functions and helpers."""

from .logger import setup_logger, get_logger
from .validators import validate_config
from .formatters import format_duration, format_score

__all__ = ['setup_logger', 'get_logger', 'validate_config', 'format_duration', 'format_score']
