import argparse
import asyncio
import inspect
import sys
from pathlib import Path

from pydantic import ValidationError

from analogflow.core.config import PipelineConfig
from analogflow.core.exceptions import AnalogFlowException, ConfigError
from analogflow.core.logging import get_logger, setup_logging
from analogflow.src.evaluation.commands import register as register_evaluation
from analogflow.src.pipeline.commands import register as register_pipeline
from analogflow.src.pipeline.service import write_stage_manifest
from analogflow.src.placement.commands import register as register_placement
from analogflow.src.reasoning.commands import register as register_reasoning
from analogflow.src.routing.commands import register as register_routing
from analogflow.src.sizing.commands import register as register_sizing
from analogflow.src.vision.commands import register as register_vision

logger = get_logger(__name__)

# flag -> PipelineConfig key (nested groups joined by "__")
FLAG_KEYS = {
    "mode": "mode",
    "seed": "seed",
    "budget": "sizing__budget",
    "out": "output_dir",
    "simulator": "adapter__simulator",
    "fixtures": "fixtures_dir",
    "model": "llm__model",
}


def common_flags() -> argparse.ArgumentParser:
    """Flags shared by every pipeline subcommand."""
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--mode", choices=["live", "replay", "record"], help="chat backend (default replay)")
    parser.add_argument("--seed", type=int, help="run seed (required)")
    parser.add_argument("--budget", type=int, help="sizing trial budget")
    parser.add_argument("--no-cot", action="store_true", help="drop the chain-of-thought steps")
    parser.add_argument("--no-micl", action="store_true", help="drop the multimodal exemplar")
    parser.add_argument("--no-intent", action="store_true", help="consensus vote only, no fusion request")
    parser.add_argument("--spec", type=Path, help="sizing targets JSON")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--simulator", type=Path, help="SPICE simulator binary")
    parser.add_argument("--config", type=Path, help="key=value configuration file")
    parser.add_argument("--fixtures", type=Path, help="replay fixture directory")
    parser.add_argument("--model", help="chat model name")
    parser.add_argument("--tag", default="run", help="request tag prefix")
    parser.add_argument("--debug", action="store_true")
    return parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="analogflow", description="Schematic image to analog layout.")
    subparsers = parser.add_subparsers(dest="command", required=True)
    parents = [common_flags()]
    for register in (
        register_vision,
        register_reasoning,
        register_sizing,
        register_placement,
        register_routing,
        register_pipeline,
        register_evaluation,
    ):
        register(subparsers, parents)
    return parser


def _nest(values: dict, key: str, value) -> None:
    *groups, leaf = key.split("__")
    for group in groups:
        values = values.setdefault(group, {})
    values[leaf] = value


def load_config(args: argparse.Namespace) -> PipelineConfig:
    """Config file first, then the command-line flags on top.

    Raises:
        ConfigError: If the file is missing or the merged values are invalid
    """
    values: dict = {}
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            _nest(values, key, value)
    for feature in ("cot", "micl", "intent"):
        if getattr(args, f"no_{feature}", False):
            _nest(values, f"ablation__{feature}", False)
    if args.debug:
        values["debug"] = True
    if args.config is not None and not args.config.is_file():
        raise ConfigError(f"Config file not found: {args.config}")
    try:
        return PipelineConfig(_env_file=args.config, **values)
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors())
        raise ConfigError(problems)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.debug)

    config = None
    try:
        if getattr(args, "needs_config", True):
            config = load_config(args)
        result = args.handler(args, config)
        if inspect.isawaitable(result):
            result = asyncio.run(result)
    except ConfigError as e:
        logger.error(f"[{e.stage}] {e.detail}")
        return 2
    except AnalogFlowException as e:
        logger.error(f"[{e.stage}] {e.detail}")
        stage = getattr(args, "stage", None)
        if stage and config is not None:
            write_stage_manifest(config, stage, config.output_dir, args.tag, detail=f"[{e.stage}] {e.detail}")
        return 1
    return result


if __name__ == "__main__":
    sys.exit(main())
