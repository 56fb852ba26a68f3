"""Application settings loaded from environment variables."""

import os
from dotenv import load_dotenv

from src.errors import ConfigError

load_dotenv()


def _optional_int(name: str) -> int | None:
    raw = os.getenv(name, "").strip()
    return int(raw) if raw else None


class Settings:
    # Logging
    LOG_LEVEL: str = os.getenv("LCFRS_LOG_LEVEL", "INFO")
    LOG_FORMAT: str = os.getenv("LCFRS_LOG_FORMAT", "console")

    # Numerics
    DTYPE: str = os.getenv("LCFRS_DTYPE", "float32")

    # Inference / batch
    WORKERS: int = int(os.getenv("LCFRS_WORKERS", "1"))
    MAX_PARSE_LEN: int = int(os.getenv("LCFRS_MAX_PARSE_LEN", "40"))
    ENUM_MAX_LEN: int = int(os.getenv("LCFRS_ENUM_MAX_LEN", "8"))

    # Reproducibility
    SEED: int | None = _optional_int("LCFRS_SEED")

    @property
    def numpy_dtype(self) -> str:
        if self.DTYPE not in ("float32", "float64"):
            raise ConfigError(f"LCFRS_DTYPE must be float32 or float64, got {self.DTYPE!r}")
        return self.DTYPE


settings = Settings()
