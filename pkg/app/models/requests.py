from typing import List, Optional

from pydantic import BaseModel, Field, field_validator

from lib.harness.config import TrainMode
from lib.routing.router import DEFAULT_K
from lib.utils.enums import DType, ReportFormat

# Defaults of the command-line contract
DEFAULT_EPS = 1e-10
DEFAULT_MAX_STEPS = 200


class UnifyRequest(BaseModel):
    base: str
    deltas: List[str] = Field(min_length=1)
    out: str


class DecoupleRequest(BaseModel):
    state: str
    task: int = Field(ge=1)  # 1-based
    out: str
    base: Optional[str] = None


class SessionRequest(BaseModel):
    state: Optional[str] = None
    base: str
    delta: str
    out: str


class IterateRequest(BaseModel):
    deltas: List[str] = Field(min_length=1)
    eps: float = Field(default=DEFAULT_EPS, gt=0)
    max_steps: int = Field(default=DEFAULT_MAX_STEPS, ge=1)
    report: ReportFormat = ReportFormat.text
    out: Optional[str] = None


class SyntheticSuiteRequest(BaseModel):
    """Flags that select a synthetic task suite; ``None`` defers to the config file or defaults."""

    config: Optional[str] = None
    seed: Optional[int] = None
    tasks: Optional[int] = Field(default=None, ge=1)
    dim: Optional[int] = Field(default=None, ge=1)
    classes: Optional[int] = Field(default=None, ge=1)
    spread: Optional[float] = Field(default=None, ge=0)
    mode: Optional[TrainMode] = None

    @field_validator("mode", mode="before")
    @classmethod
    def parse_mode(cls, value):
        if isinstance(value, str):
            return TrainMode.parse(value)
        return value

    def overrides(self) -> dict:
        return {
            "seed": self.seed,
            "task_count": self.tasks,
            "feature_dim": self.dim,
            "class_count": self.classes,
            "spread": self.spread,
            "mode": self.mode,
        }


class RouteRequest(SyntheticSuiteRequest):
    state: str
    base: str
    k: int = Field(default=DEFAULT_K, ge=1)
    out: str


class SimulateRequest(SyntheticSuiteRequest):
    k: Optional[int] = Field(default=None, ge=1)
    report: ReportFormat = ReportFormat.text
    out: Optional[str] = None


class SweepKRequest(SyntheticSuiteRequest):
    k: List[int] = []
    report: ReportFormat = ReportFormat.text
    out: Optional[str] = None

    @field_validator("k")
    @classmethod
    def check_k(cls, value: List[int]) -> List[int]:
        if any(k < 1 for k in value):
            raise ValueError("every K must be at least 1")
        return value


class StorageReportRequest(BaseModel):
    params: int = Field(gt=0)
    dtype: DType = DType.r32
    tasks: int = Field(ge=1)
    lora_params: Optional[int] = Field(default=None, gt=0)
    report: ReportFormat = ReportFormat.text
    out: Optional[str] = None


class InspectRequest(BaseModel):
    path: str
