"""
Runtime settings.

Single source of truth for process-level settings loaded from environment
variables (prefix ``NORMFLUX_``) or a local ``.env`` file. Model and run
parameters live in :mod:`normflux.schemas`; this module only covers how the
process itself behaves.
"""

import os
import logging

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class RuntimeSettings(BaseSettings):
    """Process settings for normflux."""

    model_config = SettingsConfigDict(
        env_prefix="NORMFLUX_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Worker cap for per-subject scoring fan-out
    threads: int = Field(
        default_factory=lambda: min(8, os.cpu_count() or 1),
        ge=1,
    )

    # Logging
    log_level: str = "INFO"
    log_format: str = LOG_FORMAT

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        value = value.upper()
        if not isinstance(logging.getLevelName(value), int):
            raise ValueError(f"Unknown log level: {value}")
        return value


def configure_logging(level: str | None = None) -> None:
    """Configure the root logger once for command-line use."""
    logging.basicConfig(
        level=level or settings.log_level,
        format=settings.log_format,
    )


# Global settings instance
settings = RuntimeSettings()
