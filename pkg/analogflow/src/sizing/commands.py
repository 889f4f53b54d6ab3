from pathlib import Path

import numpy as np

from analogflow.core.config import PipelineConfig
from analogflow.core.logging import get_logger
from analogflow.src.llm.service import build_gateway
from analogflow.src.netlist.service import read_netlist
from analogflow.src.pipeline.service import PipelineService, write_stage_manifest
from analogflow.src.sizing.schemas import Spec, default_spec
from analogflow.src.sizing.service import targets_met

logger = get_logger(__name__)


async def size(args, config: PipelineConfig) -> int:
    """Netlist + spec to a sized netlist, the study log and the search space."""
    ir = read_netlist(args.netlist, config.rails)
    spec = Spec.load(args.spec) if args.spec else default_spec()
    gw = None if args.no_agent else build_gateway(config)
    sized, result = await PipelineService(config, gw).size(
        ir, spec, config.output_dir, np.random.default_rng(config.seed), tag=args.tag
    )
    met = targets_met(result.best.metrics, spec)
    write_stage_manifest(config, "size", config.output_dir, args.tag, ["space.json", "study.jsonl", "sized.sp"])
    logger.info(f"Best trial {result.best.number}: fom {result.best.fom:.4g}, targets met: {met}")
    print(config.output_dir / "sized.sp")
    return 0


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("size", parents=parents, help="netlist + spec -> sized netlist + study.jsonl")
    parser.add_argument("netlist", type=Path, help="SPICE netlist to size")
    parser.add_argument("--no-agent", action="store_true", help="skip the search agent, use fallback ranges")
    parser.set_defaults(handler=size, stage="size")
