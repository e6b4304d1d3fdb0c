"""
Configuration for the simulator.

Environment settings (log level, sweep workers) and the flat ``key=value``
run-spec format used by the command line.
"""

from .settings import OssodSettings, get_settings
from .run_spec import RunSpec, parse_config_text, load_run_spec

__all__ = [
    "OssodSettings",
    "get_settings",
    "RunSpec",
    "parse_config_text",
    "load_run_spec",
]
