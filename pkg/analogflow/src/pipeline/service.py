"""Schematic image to routed layout, one stage at a time."""

from pathlib import Path

import numpy as np

from analogflow.core.config import PipelineConfig
from analogflow.core.exceptions import AnalogFlowException, ConfigError, RoutingFailed
from analogflow.core.logging import get_logger
from analogflow.src.llm.service import LLMGateway
from analogflow.src.netlist.schemas import NetlistIR
from analogflow.src.netlist.service import write_netlist
from analogflow.src.pipeline.schemas import STAGES, RunManifest, RunOutcome, StageName, StageRecord
from analogflow.src.placement.schemas import AnnealResult, PlacementArtifact, PlacementInstance
from analogflow.src.placement.service import anneal, instance_from_netlist, write_placement
from analogflow.src.reasoning.schemas import FusionResult
from analogflow.src.reasoning.service import build_branch_inputs, fuse, run_branches
from analogflow.src.routing.schemas import RoutingReport
from analogflow.src.routing.service import (
    build_grid,
    net_pairs,
    read_routes,
    render_svg,
    route_all,
    write_routes,
)
from analogflow.src.sizing.evaluators import Evaluator
from analogflow.src.sizing.schemas import SizingResult, Spec, default_spec
from analogflow.src.sizing.service import SizingService, targets_met
from analogflow.src.vision.schemas import BundleManifest
from analogflow.src.vision.service import ExtractionService

logger = get_logger(__name__)


class PipelineService:
    """Runs the flow stages against one output directory."""

    def __init__(self, config: PipelineConfig, gw: LLMGateway | None = None):
        self.config = config
        self.gw = gw
        self.sizing = SizingService(config, gw)

    def extract(self, image: Path, detections: Path, out_dir: Path) -> BundleManifest:
        return ExtractionService(self.config.vision).extract(image, detections, Path(out_dir) / "bundle")

    async def netlist(self, image: Path, bundle_dir: Path, out_dir: Path, tag: str = "run") -> FusionResult:
        """Three reasoning branches, then fusion; writes netlist.sp and fusion.json.

        Raises:
            ConfigError: Without a chat gateway
            NoParsableHypothesis: If no branch produced a netlist
        """
        if self.gw is None:
            raise ConfigError("Netlist extraction needs a chat gateway")
        inputs = build_branch_inputs(image, bundle_dir, self.config)
        hyps = await run_branches(
            inputs, self.gw, tag=tag, temperature=self.config.llm.extraction_temperature, rails=self.config.rails
        )
        result = await fuse(hyps, self.gw, self.config, tag=tag)
        out_dir = Path(out_dir)
        write_netlist(result.netlist, out_dir / "netlist.sp")
        (out_dir / "fusion.json").write_text(result.report.model_dump_json(indent=2), encoding="utf-8")
        return result

    async def size(
        self,
        ir: NetlistIR,
        spec: Spec | None,
        out_dir: Path,
        rng: np.random.Generator,
        context: str = "",
        tag: str = "run",
        evaluator: Evaluator | None = None,
    ) -> tuple[NetlistIR, SizingResult]:
        space = await self.sizing.plan(ir, context, tag=tag)
        return self.sizing.size(ir, space, spec or default_spec(), rng, out_dir, evaluator)

    def place(
        self, sized: NetlistIR, out_dir: Path, rng: np.random.Generator
    ) -> tuple[AnnealResult, PlacementInstance]:
        instance = instance_from_netlist(sized, self.config.placement, pitch=self.config.routing.pitch)
        result = anneal(instance, self.config.placement, rng)
        write_placement(result, instance, Path(out_dir) / "placement.json")
        return result, instance

    def route(self, artifact: PlacementArtifact, out_dir: Path) -> RoutingReport:
        """Route, write routes.json and layout.svg.

        Raises:
            RoutingFailed: If a net stays unrouted or the result breaks a design rule
        """
        rules = self.config.routing
        grid = build_grid(artifact.placement, artifact.instance, rules)
        report = route_all(grid, rules, net_pairs(artifact.placement, artifact.instance))
        out_dir = Path(out_dir)
        write_routes(report, out_dir / "routes.json")
        render_svg(artifact.placement, artifact.instance, grid, report.routes, out_dir / "layout.svg")
        if report.unrouted:
            raise RoutingFailed(report.unrouted)
        if report.violations:
            nets = sorted({net for v in report.violations for net in v.nets})
            raise RoutingFailed(nets)
        return report

    async def run_full(
        self,
        image: Path,
        detections: Path,
        out_dir: Path,
        spec: Spec | None = None,
        tag: str = "run",
        until: StageName = "route",
        seed: int | None = None,
        evaluator: Evaluator | None = None,
    ) -> RunOutcome:
        """Run the stages in order up to ``until``.

        A stage error stops the run: the stage is marked failed, the rest
        skipped, and manifest.json is written either way.
        """
        config = self.config
        seed = config.seed if seed is None else seed
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        rng = np.random.default_rng(seed)
        outcome = RunOutcome(manifest=RunManifest(tag=tag, seed=seed, mode=config.mode, ablation=config.ablation))
        planned = STAGES[: STAGES.index(until) + 1]

        stage: StageName = "extract"
        try:
            self.extract(image, detections, out_dir)
            outcome.record("extract", ["bundle/bundle.json", "bundle/overlay.png", "bundle/node_map.json"])

            if "netlist" in planned:
                stage = "netlist"
                fusion = await self.netlist(image, out_dir / "bundle", out_dir, tag=tag)
                outcome.netlist, outcome.fusion = fusion.netlist, fusion.report
                outcome.record("netlist", ["netlist.sp", "fusion.json"])

            if "size" in planned:
                stage = "size"
                target = spec or default_spec()
                outcome.sized, outcome.sizing = await self.size(
                    fusion.netlist, target, out_dir, rng, context=fusion.report.summary, tag=tag, evaluator=evaluator
                )
                outcome.spec_met = targets_met(outcome.sizing.best.metrics, target)
                outcome.record("size", ["space.json", "study.jsonl", "sized.sp"])

            if "place" in planned:
                stage = "place"
                outcome.placement, instance = self.place(outcome.sized, out_dir, rng)
                outcome.record("place", ["placement.json"])

            if "route" in planned:
                stage = "route"
                artifact = PlacementArtifact(
                    instance=instance,
                    placement=outcome.placement.placement,
                    sequence_pair=outcome.placement.sequence_pair,
                    cost=outcome.placement.cost,
                )
                try:
                    outcome.routing = self.route(artifact, out_dir)
                except RoutingFailed:
                    outcome.routing = read_routes(out_dir / "routes.json")
                    raise
                outcome.record("route", ["routes.json", "layout.svg"])
        except AnalogFlowException as e:
            logger.error(f"[{e.stage}] {e.detail}")
            outcome.fail(stage, f"[{e.stage}] {e.detail}", until)

        path = outcome.manifest.write(out_dir)
        status = "ok" if outcome.manifest.ok else f"failed at {outcome.manifest.failed_stage}"
        logger.info(f"Run {tag} {status}; manifest {path}")
        return outcome


def write_stage_manifest(
    config: PipelineConfig,
    name: StageName,
    out_dir: Path,
    tag: str = "run",
    artifacts: list[str] | None = None,
    detail: str | None = None,
) -> Path:
    """``<stage>.manifest.json`` for a stage run on its own; a detail marks it failed."""
    record = StageRecord(
        name=name, status="failed" if detail else "ok", artifacts=artifacts or [], detail=detail
    )
    manifest = RunManifest(tag=tag, seed=config.seed, mode=config.mode, ablation=config.ablation, stages=[record])
    return manifest.write(out_dir, f"{name}.manifest.json")
