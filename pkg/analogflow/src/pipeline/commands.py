from pathlib import Path

from analogflow.core.config import PipelineConfig
from analogflow.src.llm.service import build_gateway
from analogflow.src.pipeline.service import PipelineService
from analogflow.src.sizing.schemas import Spec


async def full(args, config: PipelineConfig) -> int:
    """Every stage from image to layout; exit 0 only when all of them succeed."""
    spec = Spec.load(args.spec) if args.spec else None
    service = PipelineService(config, build_gateway(config))
    outcome = await service.run_full(args.image, args.detections, config.output_dir, spec=spec, tag=args.tag)
    if not outcome.manifest.ok:
        return 1
    print(config.output_dir / "layout.svg")
    return 0


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("full", parents=parents, help="image -> SVG layout, all stages")
    parser.add_argument("image", type=Path, help="schematic raster (PNG or PGM)")
    parser.add_argument("detections", type=Path, help="detections JSON")
    parser.set_defaults(handler=full)
