"""
Training and model configuration.

Both configs are pydantic models so that values coming from key=value files
and CLI flags are validated in one place. Precedence is CLI > file > defaults.
"""

import math
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.config.settings import settings
from src.errors import ConfigError


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    learning_rate: float = Field(2e-3, gt=0)
    adam_beta1: float = Field(0.75, gt=0, lt=1)
    adam_beta2: float = Field(0.999, gt=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    batch_size: int = Field(20, gt=0)
    grad_clip_norm: float = Field(3.0, gt=0)
    curriculum_start_len: int = Field(30, gt=0)
    curriculum_step: int = Field(5, gt=0)
    curriculum_max_len: int = Field(40, gt=0)
    max_epochs: int = Field(20, gt=0)
    # 0 means stop at the first epoch that does not improve
    patience: int = Field(5, ge=0)
    seed: int = 0
    dtype: Literal["float32", "float64"] = Field(default_factory=lambda: settings.numpy_dtype)
    workers: int = Field(1, gt=0)
    early_stop_metric: Literal["perplexity", "f1"] = "perplexity"

    @model_validator(mode="after")
    def _check_patience(self) -> "TrainConfig":
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")
        return self

    def curriculum_len(self, epoch: int) -> int:
        """Maximum sentence length used in a 1-based epoch."""
        return min(self.curriculum_start_len + self.curriculum_step * (epoch - 1), self.curriculum_max_len)


PRESETS: dict[str, int] = {"p45": 45, "p450": 450, "p4500": 4500}


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    d: int = Field(512, gt=0)
    r1: int = Field(400, gt=0)
    r2: int = Field(4, gt=0)
    r3: int = Field(400, gt=0)
    r4: int = Field(4, gt=0)
    p: int = Field(45, gt=0)
    m1: int | None = Field(None, gt=0)
    m2: int | None = Field(None, ge=0)
    v: int = Field(10000, gt=0)

    @model_validator(mode="after")
    def _derive_nonterminals(self) -> "ModelConfig":
        # |N1| = |N2| = |P| / 3 unless given explicitly
        if self.m1 is None:
            self.m1 = max(1, math.ceil(self.p / 3))
        if self.m2 is None:
            self.m2 = max(1, math.ceil(self.p / 3))
        return self

    @classmethod
    def preset(cls, name: str, **overrides: Any) -> "ModelConfig":
        if name not in PRESETS:
            raise ConfigError(f"unknown grammar preset {name!r}; choose from {sorted(PRESETS)}")
        return cls(p=PRESETS[name], **overrides)

    @property
    def ranks(self) -> tuple[int, int, int, int]:
        return (self.r1, self.r2, self.r3, self.r4)


def read_key_values(path: str | Path) -> dict[str, str]:
    """Read a line-oriented key=value file. '#' starts a comment."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected key=value, got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key in values:
                raise ConfigError(f"{path}:{line_no}: duplicate key {key!r}")
            values[key] = value
    return values


def merge_overrides(file_values: dict[str, Any], cli_values: dict[str, Any]) -> dict[str, Any]:
    """CLI values win over file values; None on the CLI means 'not given'."""
    merged = dict(file_values)
    merged.update({k: v for k, v in cli_values.items() if v is not None})
    return merged


def build_config(model_cls: type[BaseModel], values: dict[str, Any]) -> BaseModel:
    try:
        return model_cls(**values)
    except ValidationError as e:
        raise ConfigError(f"invalid {model_cls.__name__}: {e}") from e


def load_train_config(path: str | Path | None = None, **cli_values: Any) -> TrainConfig:
    file_values = read_key_values(path) if path else {}
    return build_config(TrainConfig, merge_overrides(file_values, cli_values))


def dump_key_values(config: BaseModel) -> str:
    return "".join(f"{k}={v}\n" for k, v in config.model_dump().items())
