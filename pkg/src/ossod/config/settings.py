"""Process-level settings read from the environment (``OSSOD_*``) or a ``.env`` file."""
from __future__ import annotations

from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

_SETTINGS: "OssodSettings | None" = None


class OssodSettings(BaseSettings):
    """Runtime knobs that never change a simulation result."""

    model_config = SettingsConfigDict(env_prefix="OSSOD_", env_file=".env", extra="ignore")

    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "WARNING"
    log_json: bool = False
    sweep_workers: int = Field(default=1, ge=1)


def get_settings() -> OssodSettings:
    """Process-wide settings, read from the environment and ``.env`` on first use."""
    global _SETTINGS
    if _SETTINGS is None:
        _SETTINGS = OssodSettings()
    return _SETTINGS


def reset_settings() -> None:
    """Drop the cached settings so the next call re-reads the environment."""
    global _SETTINGS
    _SETTINGS = None
