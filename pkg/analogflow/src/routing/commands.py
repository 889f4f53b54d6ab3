from pathlib import Path

from analogflow.core.config import PipelineConfig
from analogflow.src.pipeline.service import PipelineService, write_stage_manifest
from analogflow.src.placement.service import read_placement


def route(args, config: PipelineConfig) -> int:
    """placement.json to routes.json and layout.svg; fails on unrouted nets or DRC violations."""
    artifact = read_placement(args.placement)
    PipelineService(config).route(artifact, config.output_dir)
    write_stage_manifest(config, "route", config.output_dir, args.tag, ["routes.json", "layout.svg"])
    print(config.output_dir / "layout.svg")
    return 0


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("route", parents=parents, help="placement.json -> routes.json + layout.svg")
    parser.add_argument("placement", type=Path, help="placement JSON written by the place command")
    parser.set_defaults(handler=route, stage="route")
