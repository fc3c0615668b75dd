"""Run configuration: defaults table, flat file parsing and validation."""

from .manager import DEFAULTS, METHOD_PRESETS, ConfigManager, format_value, parse_value, read_config_file

__all__ = ['DEFAULTS', 'METHOD_PRESETS', 'ConfigManager', 'format_value', 'parse_value', 'read_config_file']
