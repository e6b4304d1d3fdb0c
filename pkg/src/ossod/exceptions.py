"""Error hierarchy shared by the library and the command line.

Each error carries the process exit status the CLI reports for it.
"""
from __future__ import annotations


class OssodError(Exception):
    """Base class for expected, user-facing failures."""

    exit_code: int = 1


class ConfigError(OssodError, ValueError):
    """Invalid configuration key, value or command usage."""

    exit_code = 2

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class DataFormatError(OssodError, ValueError):
    """Malformed embedding, score or model file."""

    exit_code = 3

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class NumericalError(OssodError, ArithmeticError):
    """Numerical failure such as a singular covariance matrix."""

    exit_code = 4
