from pathlib import Path

from analogflow.core.config import PipelineConfig
from analogflow.core.logging import get_logger
from analogflow.src.llm.service import build_gateway
from analogflow.src.pipeline.service import PipelineService, write_stage_manifest

logger = get_logger(__name__)


async def netlist(args, config: PipelineConfig) -> int:
    """Annotated bundle to a fused netlist (``netlist.sp`` + ``fusion.json``)."""
    bundle = args.bundle or config.output_dir / "bundle"
    service = PipelineService(config, build_gateway(config))
    result = await service.netlist(args.image, bundle, config.output_dir, tag=args.tag)
    write_stage_manifest(config, "netlist", config.output_dir, args.tag, ["netlist.sp", "fusion.json"])
    logger.info(f"Fusion stage {result.report.stage}, parsed branches: {', '.join(result.report.parsed)}")
    print(config.output_dir / "netlist.sp")
    return 0


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("netlist", parents=parents, help="annotated bundle -> fused SPICE netlist")
    parser.add_argument("image", type=Path, help="the raw schematic image")
    parser.add_argument("--bundle", type=Path, default=None, help="bundle directory (default <out>/bundle)")
    parser.set_defaults(handler=netlist, stage="netlist")
