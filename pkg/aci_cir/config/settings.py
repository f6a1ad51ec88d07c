"""Configuration management for aci-cir"""

import os
from pathlib import Path

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


def load_env_files() -> None:
    """Load the first .env file found in the usual locations"""
    possible_paths = [
        ".env",  # Current directory (for development)
        Path.home() / ".config" / "aci-cir" / ".env",  # User config
        Path.home() / ".aci-cir.env",  # User home
        os.path.expanduser("~/.config/aci-cir/.env"),  # Expanded path
    ]

    for env_path in possible_paths:
        if Path(env_path).exists():
            load_dotenv(env_path)
            break


load_env_files()


class Settings(BaseSettings):
    """Process-wide defaults for aci-cir"""

    model_config = SettingsConfigDict(
        env_prefix="ACI_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Logging
    log_level: str = Field(default="INFO")

    # Simulation
    default_dt: float = Field(default=1e-3, gt=0)
    burn_in: float = Field(default=10.0, ge=0)

    # Online smoother
    lag_cap: int = Field(default=5000, ge=1)
    lag_tolerance: float = Field(default=1e-6, ge=0)

    # Analysis
    analysis_stride: int = Field(default=10, ge=1)
    weak_evidence_threshold: float = Field(default=1e-4, ge=0)
    covariance_jitter: float = Field(default=0.0, ge=0)
    large_noise_scale: float = Field(default=1e6, gt=1)
    psd_tolerance: float = Field(default=1e-10, ge=0)
    gram_coupling_tolerance: float = Field(default=1e-12, ge=0)
    workers: int = Field(default=1, ge=1)

    # Output
    artifacts_dir: str = Field(default="artifacts")


# Global settings instance
settings = Settings()
