"""Runtime settings for ssmc-lab."""

import os
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Settings loaded from SSMC_* environment variables or a .env file."""

    model_config = SettingsConfigDict(
        env_prefix="SSMC_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore"
    )

    # Logging
    log_level: str = Field(
        default="INFO",
        description="Logging level"
    )

    # Execution
    threads: int = Field(
        default_factory=lambda: os.cpu_count() or 1,
        ge=1,
        description="Worker processes for replica and sweep parallelism"
    )

    out_dir: Path = Field(
        default=Path("runs"),
        description="Default directory for experiment artifacts"
    )

    # Numerical guards
    mc_budget_steps: float = Field(
        default=1e7,
        gt=0,
        description="Largest expected cycle length simulated by Monte Carlo"
    )

    exact_step_limit: int = Field(
        default=2 ** 18,
        ge=1,
        description="Horizon up to which survival curves are iterated one step at a time"
    )

    survival_grid_points: int = Field(
        default=2 ** 16,
        ge=16,
        description="Grid size for survival curves beyond exact_step_limit"
    )


def get_settings() -> Settings:
    """Get settings, checking multiple .env locations."""
    env_paths = [
        Path.cwd() / ".env",
        Path.cwd().parent / ".env",
        Path(__file__).parent.parent.parent / ".env",  # repository root
    ]

    for env_path in env_paths:
        if env_path.exists():
            return Settings(_env_file=env_path)

    return Settings()


settings = get_settings()
