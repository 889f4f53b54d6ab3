from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from analogflow.src.netlist.schemas import NetlistIR

BranchId = Literal["raw", "annotated", "dual"]
BRANCH_IDS: tuple[BranchId, ...] = ("raw", "annotated", "dual")


class MiclExemplar(BaseModel):
    """Recorded reference interaction prepended to every extraction request."""

    model_config = ConfigDict(frozen=True)

    images: tuple[Path, ...]
    prompt: str
    response: str


class BranchInput(BaseModel):
    model_config = ConfigDict(frozen=True)

    branch_id: BranchId
    images: tuple[Path, ...]
    system_prompt: str
    cot_prompt: str
    micl_exemplar: MiclExemplar | None = None
    icl_example: str | None = None

    @model_validator(mode="after")
    def _check_images(self) -> "BranchInput":
        expected = 2 if self.branch_id == "dual" else 1
        if len(self.images) != expected:
            raise ValueError(f"branch {self.branch_id} needs {expected} image(s), got {len(self.images)}")
        return self


class BranchHypothesis(BaseModel):
    """One branch's answer: the parsed netlist, or the reason it failed to parse."""

    branch_id: BranchId
    netlist: NetlistIR | None = None
    trace: str = ""
    parse_error: str | None = None

    @property
    def parsed(self) -> bool:
        return self.netlist is not None


class SlotVote(BaseModel):
    slot: str
    kind: str
    present: list[BranchId]
    kind_votes: dict[str, str]
    # kind and rail label per port, as each branch drew the device
    fingerprints: dict[str, tuple[str, ...]] = Field(default_factory=dict)
    kept: bool


class Posterior(BaseModel):
    """Normalised weights over candidates; ``best`` is None when every weight is zero."""

    weights: list[float]
    best: int | None = None


class FusionReport(BaseModel):
    reference: BranchId
    parsed: list[BranchId]
    slots: list[SlotVote] = Field(default_factory=list)
    agreement: dict[str, float] = Field(default_factory=dict)
    consensus_problems: list[str] = Field(default_factory=list)
    llm_problems: list[str] | None = None
    stage: Literal["single", "consensus", "llm"] = "consensus"
    # false when the returned netlist fails the structural check
    valid: bool = True
    posterior: dict[str, float] = Field(default_factory=dict)
    # compressed branch reasoning, handed on to the sizing agent
    summary: str = ""


class FusionResult(BaseModel):
    netlist: NetlistIR
    report: FusionReport
