# app/core/config.py

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict
from typing import Optional
from pathlib import Path
from functools import lru_cache


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        case_sensitive=True,
        extra="ignore"
    )

    # Project directories
    BASE_DIR: Path = Path(__file__).parent.parent.parent
    DATA_DIR: Path = BASE_DIR / "app" / "data"
    REFERENCE_SPECTRA: Path = DATA_DIR / "reference_spectra.csv"

    # Artifact identity
    PROJECT_NAME: str = "NSGM Unmixing"
    VERSION: str = "1.0.0"

    # Parallelism
    UNMIX_THREADS: int = Field(default=1, gt=0)

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_DIR: Optional[Path] = None
    LOG_JSON: bool = False

    # Numerics shared by every solver
    GAMMA_MAX_CAP: float = Field(default=1e6, gt=1.0)
    BOUNDARY_TOL: float = Field(default=1e-9, gt=0.0)

    # Cube unmixing
    MAX_PIXEL_FAILURE_FRACTION: float = Field(default=0.01, ge=0.0, le=1.0)

    # Experiments
    DEFAULT_SEED: int = 0


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()
