from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field
from typing import Optional

from renewal import __version__


class Settings(BaseSettings):
    """Application settings and configuration."""

    model_config = SettingsConfigDict(
        env_prefix="VLMC_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Application Configuration
    app_name: str = Field(default="vlmc-renewal", description="Application name")
    app_version: str = Field(default=__version__, description="Application version")
    debug: bool = Field(default=False, description="Debug mode")
    log_level: str = Field(default="INFO", description="Logging level")
    log_file: Optional[str] = Field(default=None, description="Optional rotating log file")

    # Reproducibility
    seed: Optional[int] = Field(default=None, ge=0, lt=2**64, description="Fallback master seed (VLMC_SEED)")

    # Sampler defaults
    default_alpha: float = Field(default=0.001, gt=0, description="Dirichlet hyperparameter")
    default_trim: float = Field(default=0.10, ge=0.0, lt=0.5, description="Total trimmed fraction of PBFs")
    default_jobs: int = Field(default=1, ge=1, description="Worker processes for subset fan-out")
    mh_default_iters: int = Field(default=100_000, ge=1, description="Metropolis-Hastings iterations")

    # Exact oracles
    enumeration_limit: int = Field(default=1_000_000, ge=1, description="Largest tree space enumerated")


# Global settings instance
settings = Settings()


def get_settings() -> Settings:
    """Get application settings."""
    return settings
