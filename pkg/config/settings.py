# ============================================================================
# FILE: config/settings.py
# ============================================================================
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict

from config.constants import DEFAULT_CELL_BUDGET


class Settings(BaseSettings):
    # Grid budgets
    CELL_BUDGET: int = DEFAULT_CELL_BUDGET

    # Worker pool; None means one worker per available core
    THREADS: Optional[int] = None

    # Output
    LOG_LEVEL: str = "INFO"
    OUTPUT_DIR: str = "runs"
    PROGRESS: bool = True

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="UBIQUITY_",
        case_sensitive=True,
        extra="ignore",
    )


# Global settings instance
settings = Settings()
