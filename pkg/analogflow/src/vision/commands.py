from pathlib import Path

from analogflow.core.config import PipelineConfig
from analogflow.core.logging import get_logger
from analogflow.src.pipeline.service import PipelineService, write_stage_manifest

logger = get_logger(__name__)


def extract(args, config: PipelineConfig) -> int:
    """Schematic image and detections to an annotated bundle under ``<out>/bundle``."""
    logger.debug(f"Extracting bundle from {args.image}")
    manifest = PipelineService(config).extract(args.image, args.detections, config.output_dir)
    artifacts = [f"bundle/{name}" for name in ("bundle.json", manifest.raw_image, manifest.annotated_image)]
    write_stage_manifest(config, "extract", config.output_dir, args.tag, artifacts)
    print(config.output_dir / "bundle")
    return 0


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("extract", parents=parents, help="image + detections -> annotated bundle")
    parser.add_argument("image", type=Path, help="schematic raster (PNG or PGM)")
    parser.add_argument("detections", type=Path, help="detections JSON")
    parser.set_defaults(handler=extract, stage="extract")
