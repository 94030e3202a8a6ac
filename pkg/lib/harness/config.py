import logging
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from lib.utils.enums import TrainModeKind
from lib.utils.errors import BadConfigError
from lib.utils.utilities import read_key_value_file

logger = logging.getLogger(__name__)


class TrainMode(BaseModel):
    """``full`` fine-tuning, or a rank-``r`` update written ``lora:<r>``."""

    model_config = ConfigDict(frozen=True)

    kind: TrainModeKind = TrainModeKind.full
    rank: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def check_rank(self) -> "TrainMode":
        if self.kind == TrainModeKind.low_rank and self.rank is None:
            raise ValueError("low-rank mode needs a rank")
        if self.kind == TrainModeKind.full and self.rank is not None:
            raise ValueError("full mode takes no rank")
        return self

    @classmethod
    def parse(cls, text: str) -> "TrainMode":
        text = text.strip().lower()
        if text == TrainModeKind.full.value:
            return cls()
        prefix = f"{TrainModeKind.low_rank.value}:"
        if text.startswith(prefix):
            try:
                rank = int(text[len(prefix):])
            except ValueError:
                raise ValueError(f"invalid rank in mode '{text}'")
            return cls(kind=TrainModeKind.low_rank, rank=rank)
        raise ValueError(f"mode must be 'full' or 'lora:<r>', got '{text}'")

    def __str__(self) -> str:
        if self.kind == TrainModeKind.full:
            return "full"
        return f"lora:{self.rank}"


class BenchmarkConfig(BaseModel):
    seed: int = 1
    task_count: int = Field(default=5, ge=1)
    feature_dim: int = Field(default=64, ge=1)
    class_count: int = Field(default=4, ge=1)
    spread: float = Field(default=0.5, ge=0.0)
    # Share of each task's class means taken from the pre-training means.
    relatedness: float = Field(default=0.3, ge=0.0, le=1.0)
    train_per_class: int = Field(default=50, ge=1)
    test_per_class: int = Field(default=50, ge=1)
    few_shot: Optional[int] = Field(default=None, ge=1)
    mode: TrainMode = TrainMode()
    k: int = Field(default=4, ge=1)
    steps: int = Field(default=200, ge=1)
    lr: float = Field(default=0.5, ge=0.0)
    pretrain_steps: int = Field(default=200, ge=1)
    task_agnostic: bool = False
    task_order: Optional[List[int]] = None

    @field_validator("mode", mode="before")
    @classmethod
    def parse_mode(cls, value: Any) -> Any:
        if isinstance(value, str):
            return TrainMode.parse(value)
        return value

    @field_validator("task_order", mode="before")
    @classmethod
    def parse_order(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [int(part) for part in value.split(",") if part.strip()]
        return value

    @model_validator(mode="after")
    def check_order(self) -> "BenchmarkConfig":
        if self.task_order is not None and sorted(self.task_order) != list(range(self.task_count)):
            raise ValueError(f"task_order must be a permutation of 0..{self.task_count - 1}")
        return self

    @property
    def samples_per_class(self) -> int:
        """Training samples per category, after the few-shot override."""
        return self.few_shot if self.few_shot is not None else self.train_per_class


def build_config(values: Dict[str, Any]) -> BenchmarkConfig:
    """Validate raw values into a ``BenchmarkConfig``; unknown keys are rejected."""
    unknown = set(values) - set(BenchmarkConfig.model_fields)
    if unknown:
        logger.error(f"Unknown benchmark config keys: {sorted(unknown)}")
        raise BadConfigError(f"unknown keys {sorted(unknown)}", "benchmark config")
    try:
        return BenchmarkConfig(**values)
    except ValidationError as e:
        logger.error(f"Invalid benchmark config: {e}")
        raise BadConfigError(str(e), "benchmark config") from e


def load_benchmark_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> BenchmarkConfig:
    """Read a ``key=value`` file (optional) and apply overrides on top."""
    values: Dict[str, Any] = {}
    if path:
        try:
            values.update(read_key_value_file(path))
        except (OSError, ValueError) as e:
            raise BadConfigError(str(e), path) from e
    if overrides:
        values.update({key: value for key, value in overrides.items() if value is not None})
    return build_config(values)
