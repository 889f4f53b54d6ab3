from pathlib import Path
from typing import Literal

from pydantic import BaseModel, Field, model_validator

FailureStage = Literal["netlist", "sizing", "placement", "routing", "none"]
Difficulty = Literal["easy", "medium", "difficult"]


class CaseInfo(BaseModel):
    """Contents of a case's ``case.json``."""

    id: str
    difficulty: Difficulty = "medium"
    image: str = "schematic.png"
    detections: str = "detections.json"
    golden: str = "golden.sp"
    spec: str | None = "spec.json"


class BenchmarkCase(BaseModel):
    id: str
    difficulty: Difficulty
    image: Path
    detections: Path
    golden: Path
    spec: Path | None = None


class CaseResult(BaseModel):
    case_id: str
    difficulty: Difficulty = "medium"
    n: int = Field(ge=1)
    c: int = Field(ge=0)
    # one entry per attempt
    failures: list[FailureStage] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check(self) -> "CaseResult":
        if self.c > self.n:
            raise ValueError(f"c={self.c} exceeds n={self.n}")
        return self


class TableRow(BaseModel):
    label: str
    difficulty: str = ""
    n: int | None = None
    c: int | None = None
    pass_at: dict[int, float | None] = Field(default_factory=dict)


class BenchmarkTable(BaseModel):
    setting: str = "full"
    ks: tuple[int, ...] = (1, 5)
    results: list[CaseResult] = Field(default_factory=list)
