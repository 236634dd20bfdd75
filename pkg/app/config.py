from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Process-level settings read from the environment (or a local .env file).
    Run hyperparameters live in StageConfig, not here.
    """

    model_config = SettingsConfigDict(
        env_prefix="BANDIT_REGRESSOR_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # BANDIT_REGRESSOR_OUT
    out: Path = Path("runs")
    log_level: str = "INFO"
    log_every: int = 50
    sweep_workers: int = 1


settings = Settings()
