from pathlib import Path

from analogflow.core.config import PipelineConfig
from analogflow.core.logging import get_logger
from analogflow.src.evaluation.repository import CaseRepository
from analogflow.src.evaluation.service import ABLATIONS, format_markdown, pass_at_k, run_ablations, write_tables
from analogflow.src.llm.service import build_gateway

logger = get_logger(__name__)


async def evaluate(args, config: PipelineConfig) -> int:
    """Benchmark tables (CSV + Markdown) under ``<out>/eval``."""
    cases = CaseRepository(args.corpus).all()
    settings = list(ABLATIONS) if args.ablations else ["full"]
    out_dir = config.output_dir / "eval"
    tables = await run_ablations(cases, config, args.n, build_gateway(config), out_dir, settings)
    for table in tables:
        write_tables(table, out_dir)
        print(format_markdown(table))
    return 0


def passk(args, config: PipelineConfig | None) -> int:
    print(f"{pass_at_k(args.n, args.c, args.k):.3f}")
    return 0


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("eval", parents=parents, help="benchmark corpus -> Pass@k tables")
    parser.add_argument("corpus", type=Path, help="directory of case directories")
    parser.add_argument("--n", type=int, default=15, help="attempts per case")
    parser.add_argument("--ablations", action="store_true", help="also run no_cot, no_micl and no_intent")
    parser.set_defaults(handler=evaluate)

    parser = subparsers.add_parser("passk", help="unbiased Pass@k from n attempts with c successes")
    parser.add_argument("n", type=int)
    parser.add_argument("c", type=int)
    parser.add_argument("k", type=int)
    parser.add_argument("--debug", action="store_true")
    parser.set_defaults(handler=passk, needs_config=False)
