from pathlib import Path

import numpy as np

from analogflow.core.config import PipelineConfig
from analogflow.src.netlist.service import read_netlist
from analogflow.src.pipeline.service import PipelineService, write_stage_manifest


def place(args, config: PipelineConfig) -> int:
    sized = read_netlist(args.netlist, config.rails)
    PipelineService(config).place(sized, config.output_dir, np.random.default_rng(config.seed))
    write_stage_manifest(config, "place", config.output_dir, args.tag, ["placement.json"])
    print(config.output_dir / "placement.json")
    return 0


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("place", parents=parents, help="sized netlist -> placement.json")
    parser.add_argument("netlist", type=Path, help="sized SPICE netlist")
    parser.set_defaults(handler=place, stage="place")
