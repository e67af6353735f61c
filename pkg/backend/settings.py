"""
Process-level settings loaded from the environment (prefix ``MOCAP_``).

``.env`` is read first, falling back to ``.env.example`` for defaults.
"""

import logging
from functools import lru_cache
from pathlib import Path

from dotenv import load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict

ROOT_DIR = Path(__file__).parent.parent
DATA_DIR = ROOT_DIR / "data"

_env_path = ROOT_DIR / ".env"
if _env_path.exists():
    load_dotenv(_env_path)
else:
    _env_example = ROOT_DIR / ".env.example"
    if _env_example.exists():
        load_dotenv(_env_example)


class Settings(BaseSettings):
    """Defaults that CLI flags and config files can override."""

    model_config = SettingsConfigDict(env_prefix="MOCAP_", extra="ignore")

    output_dir: str = "./output"
    jobs: int = 1
    seed: int = 0
    log_level: str = "INFO"
    api_port: int = 8000
    max_lag_s: float = 0.25
    batches: int = 8
    debug: bool = False


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Get or create the settings instance."""
    return Settings()


def configure_logging(level: str = None) -> None:
    """Install the single stream handler used by the CLI and the API."""
    level = (level or get_settings().log_level).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
