"""
Configuration: flat run settings and their typed views
"""

from .settings import RESOLVED_FILE, Settings, load_settings, parse_overrides, read_config_file

__all__ = ["RESOLVED_FILE", "Settings", "load_settings", "parse_overrides", "read_config_file"]
