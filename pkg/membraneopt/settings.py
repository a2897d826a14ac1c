"""
Environment settings (``MEMBRANE_OPT_*`` variables).
"""

from functools import lru_cache
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class MembraneOptSettings(BaseSettings):
    """Process-wide settings read from the environment."""

    threads: int = Field(default=1, ge=1, description="Cap on concurrent sweep points and starts")
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = Field(
        default="WARNING", description="Root log level used by the cli"
    )
    enable_metrics: bool = Field(default=False, description="Collect Prometheus metrics")

    model_config = SettingsConfigDict(env_prefix="MEMBRANE_OPT_", case_sensitive=False)


@lru_cache(maxsize=1)
def get_settings() -> MembraneOptSettings:
    """Return the cached settings; call ``get_settings.cache_clear()`` to re-read."""
    return MembraneOptSettings()
