import json
import math
from enum import Enum
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from analogflow.core.exceptions import MissingArtifact

Scale = Literal["linear", "log"]
Direction = Literal[">=", "<="]


class Dim(BaseModel):
    """One searchable parameter, named ``<device>.<PARAM>``."""

    model_config = ConfigDict(frozen=True)

    name: str
    lo: float
    hi: float
    scale: Scale = "linear"
    unit: str = ""

    @model_validator(mode="after")
    def _check(self) -> "Dim":
        if not self.lo < self.hi:
            raise ValueError(f"{self.name}: lo {self.lo} must be below hi {self.hi}")
        if self.scale == "log" and self.lo <= 0:
            raise ValueError(f"{self.name}: log-scale bounds must be positive")
        return self

    @property
    def device(self) -> str:
        return self.name.split(".", 1)[0]

    @property
    def param(self) -> str:
        return self.name.split(".", 1)[1]

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi


class ParameterSpace(BaseModel):
    dims: list[Dim]
    provenance: str = ""
    fallback: list[str] = Field(default_factory=list)
    # follower dim -> leader dim, for symmetric device pairs
    ties: dict[str, str] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check(self) -> "ParameterSpace":
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ValueError("dimension names must be unique")
        for follower, leader in self.ties.items():
            if leader not in names:
                raise ValueError(f"tie {follower} -> {leader} names an unknown dimension")
        return self

    def dim(self, name: str) -> Dim:
        for d in self.dims:
            if d.name == name:
                return d
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dims]


class Target(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    metric: str
    direction: Direction = Field(alias="dir")
    threshold: float
    weight: float = Field(1.0, gt=0)

    @field_validator("threshold")
    @classmethod
    def _nonzero(cls, value: float) -> float:
        if value <= 0 or not math.isfinite(value):
            raise ValueError("threshold must be positive and finite")
        return value


class Spec(BaseModel):
    targets: list[Target]

    @classmethod
    def load(cls, path: Path) -> "Spec":
        path = Path(path)
        if not path.is_file():
            raise MissingArtifact(f"Spec file not found: {path}")
        return cls(targets=json.loads(path.read_text(encoding="utf-8")))


class TrialState(str, Enum):
    RUNNING = "running"
    COMPLETE = "complete"
    PRUNED = "pruned"
    FAILED = "failed"


class Trial(BaseModel):
    number: int
    x: dict[str, float]
    metrics: dict[str, float] = Field(default_factory=dict)
    fom: float | None = None
    state: TrialState = TrialState.RUNNING
    steps: list[float] = Field(default_factory=list)
    error: str | None = None

    @model_validator(mode="after")
    def _check(self) -> "Trial":
        if self.state == TrialState.COMPLETE and (self.fom is None or not math.isfinite(self.fom)):
            raise ValueError("a complete trial needs a finite fom")
        return self


class SizingResult(BaseModel):
    space: ParameterSpace
    best: Trial
    trials: list[Trial]


def default_spec() -> Spec:
    """Targets used when a run names no spec file."""
    return Spec(
        targets=[
            Target(metric="gain_db", dir=">=", threshold=40.0),
            Target(metric="gbw_hz", dir=">=", threshold=1e6),
            Target(metric="power_w", dir="<=", threshold=1e-3),
        ]
    )
