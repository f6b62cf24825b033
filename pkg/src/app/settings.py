from pathlib import Path
from typing import Literal

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

BASE_DIR = Path(__file__).resolve().parents[2]
DEFAULT_OUTPUT = BASE_DIR / "output"
SCENARIO_DIR = BASE_DIR / "scenarios"


class Settings(BaseSettings):
    """Runtime configuration read from ``EVPLATOON_*`` environment variables or ``.env``."""

    model_config = SettingsConfigDict(env_prefix="EVPLATOON_", env_file=".env", extra="ignore")

    no_color: bool = False
    output_dir: Path = DEFAULT_OUTPUT
    jobs: int = 1
    log_level: str = "INFO"
    log_format: Literal["rich", "json"] = "rich"
    seed: int = 0
    trials: int = 100

    @field_validator("no_color", mode="before")
    @classmethod
    def _presence_disables_color(cls, value):
        # NO_COLOR convention: set at all means on
        if isinstance(value, str) and value.strip() == "":
            return True
        return value

    @field_validator("log_level")
    @classmethod
    def _upper(cls, value: str) -> str:
        return value.upper()


def get_settings() -> Settings:
    return Settings()
