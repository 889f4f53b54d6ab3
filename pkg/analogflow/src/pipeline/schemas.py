from pathlib import Path
from typing import Literal

from pydantic import BaseModel, Field

from analogflow.core.config import AblationFlags
from analogflow.src.netlist.schemas import NetlistIR
from analogflow.src.placement.schemas import AnnealResult
from analogflow.src.reasoning.schemas import FusionReport
from analogflow.src.routing.schemas import RoutingReport
from analogflow.src.sizing.schemas import SizingResult

StageName = Literal["extract", "netlist", "size", "place", "route"]
STAGES: tuple[StageName, ...] = ("extract", "netlist", "size", "place", "route")
StageStatus = Literal["ok", "failed", "skipped"]


class StageRecord(BaseModel):
    name: StageName
    status: StageStatus
    # paths relative to the run directory
    artifacts: list[str] = Field(default_factory=list)
    detail: str | None = None


class RunManifest(BaseModel):
    """Per-run record of every stage; carries no timestamps so identical runs compare equal."""

    tag: str
    seed: int
    mode: str
    ablation: AblationFlags
    stages: list[StageRecord] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return bool(self.stages) and all(s.status == "ok" for s in self.stages)

    @property
    def failed_stage(self) -> StageName | None:
        return next((s.name for s in self.stages if s.status == "failed"), None)

    def stage(self, name: StageName) -> StageRecord | None:
        return next((s for s in self.stages if s.name == name), None)

    def write(self, out_dir: Path, name: str = "manifest.json") -> Path:
        path = Path(out_dir) / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2), encoding="utf-8")
        return path


class RunOutcome(BaseModel):
    """Everything a run produced, up to the stage where it stopped."""

    manifest: RunManifest
    netlist: NetlistIR | None = None
    fusion: FusionReport | None = None
    sized: NetlistIR | None = None
    sizing: SizingResult | None = None
    spec_met: bool | None = None
    placement: AnnealResult | None = None
    routing: RoutingReport | None = None

    def record(self, name: StageName, artifacts: list[str] | None = None) -> None:
        self.manifest.stages.append(StageRecord(name=name, status="ok", artifacts=artifacts or []))

    def fail(self, name: StageName, detail: str, until: StageName = "route") -> None:
        """Mark ``name`` failed and every later stage up to ``until`` skipped."""
        self.manifest.stages.append(StageRecord(name=name, status="failed", detail=detail))
        for later in STAGES[STAGES.index(name) + 1 : STAGES.index(until) + 1]:
            self.manifest.stages.append(StageRecord(name=later, status="skipped"))
