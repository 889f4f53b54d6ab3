"""Pass@k estimation and the benchmark harness."""

import asyncio
import csv
from fractions import Fraction
from pathlib import Path

import numpy as np

from analogflow.core.config import PipelineConfig, RailSettings, SuccessCriteria
from analogflow.core.exceptions import DomainError
from analogflow.core.logging import get_logger
from analogflow.src.evaluation.schemas import (
    BenchmarkCase,
    BenchmarkTable,
    CaseResult,
    FailureStage,
    TableRow,
)
from analogflow.src.llm.service import LLMGateway
from analogflow.src.netlist.service import read_netlist, recovery_score
from analogflow.src.pipeline.schemas import RunOutcome, StageName
from analogflow.src.pipeline.service import PipelineService
from analogflow.src.sizing.schemas import Spec

logger = get_logger(__name__)

ABLATIONS: dict[str, dict[str, bool]] = {
    "full": {},
    "no_cot": {"ablation__cot": False},
    "no_micl": {"ablation__micl": False},
    "no_intent": {"ablation__intent": False},
}
FAILURE_OF_STAGE: dict[StageName, FailureStage] = {
    "extract": "netlist",
    "netlist": "netlist",
    "size": "sizing",
    "place": "placement",
    "route": "routing",
}


def pass_at_k(n: int, c: int, k: int) -> float:
    """Probability that k of n attempts, drawn without replacement, include a success.

    1 - C(n-c, k) / C(n, k), evaluated as an exact product of ratios.

    Raises:
        DomainError: Unless 0 <= c <= n and 1 <= k <= n
    """
    if n < 1 or not 0 <= c <= n or not 1 <= k <= n:
        raise DomainError(f"pass_at_k needs 0 <= c <= n and 1 <= k <= n, got n={n} c={c} k={k}")
    if n - c < k:
        return 1.0
    miss = Fraction(1)
    for i in range(k):
        miss *= Fraction(n - c - i, n - i)
    return float(1 - miss)


def empirical_pass_at_k(outcomes: list[bool], k: int, draws: int, rng: np.random.Generator) -> float:
    """Monte-Carlo pass@k: share of k-subsets, drawn without replacement, with a success."""
    n = len(outcomes)
    if not 1 <= k <= n:
        raise DomainError(f"k={k} outside 1..{n}")
    hits = np.asarray(outcomes, dtype=bool)
    # a random permutation per draw; its first k columns are the sample
    picks = np.argsort(rng.random((draws, n)), axis=1)[:, :k]
    return float(hits[picks].any(axis=1).mean())


def last_stage(criteria: SuccessCriteria) -> StageName:
    """Furthest stage a success predicate needs."""
    if criteria.layout:
        return "route"
    if criteria.sizing:
        return "size"
    return "netlist"


def attempt_failure(
    outcome: RunOutcome, case: BenchmarkCase, criteria: SuccessCriteria, rails: RailSettings | None = None
) -> FailureStage:
    """Stage at which an attempt missed the success predicate, or ``none``."""
    failed = outcome.manifest.failed_stage
    if failed is not None:
        return FAILURE_OF_STAGE[failed]
    if criteria.netlist:
        truth = read_netlist(case.golden, rails)
        if not recovery_score(outcome.netlist, truth).exact_match:
            return "netlist"
    if criteria.sizing and not outcome.spec_met:
        return "sizing"
    if criteria.layout and (outcome.routing is None or not outcome.routing.clean):
        return "routing"
    return "none"


async def run_case(
    case: BenchmarkCase,
    config: PipelineConfig,
    n: int,
    gw: LLMGateway | None,
    out_dir: Path,
    criteria: SuccessCriteria | None = None,
) -> CaseResult:
    """n independent attempts; attempt i replays under tag ``<case>:attempt:<i>`` with seed + i."""
    criteria = criteria or config.success
    spec = Spec.load(case.spec) if case.spec else None
    until = last_stage(criteria)

    async def attempt(i: int) -> FailureStage:
        service = PipelineService(config.with_overrides(seed=config.seed + i), gw)
        outcome = await service.run_full(
            case.image,
            case.detections,
            Path(out_dir) / case.id / f"attempt_{i}",
            spec=spec,
            tag=f"{case.id}:attempt:{i}",
            until=until,
        )
        return attempt_failure(outcome, case, criteria, config.rails)

    failures = list(await asyncio.gather(*(attempt(i) for i in range(n))))
    c = failures.count("none")
    logger.info(f"Case {case.id}: {c}/{n} attempts succeeded")
    return CaseResult(case_id=case.id, difficulty=case.difficulty, n=n, c=c, failures=failures)


async def run_benchmark(
    cases: list[BenchmarkCase],
    config: PipelineConfig,
    n: int,
    gw: LLMGateway | None,
    out_dir: Path,
    criteria: SuccessCriteria | None = None,
    setting: str = "full",
) -> BenchmarkTable:
    if n < 1:
        raise DomainError(f"n={n} attempts")
    results = await asyncio.gather(*(run_case(case, config, n, gw, out_dir, criteria) for case in cases))
    return BenchmarkTable(setting=setting, results=list(results))


async def run_ablations(
    cases: list[BenchmarkCase],
    config: PipelineConfig,
    n: int,
    gw: LLMGateway | None,
    out_dir: Path,
    settings: list[str] | None = None,
) -> list[BenchmarkTable]:
    """The full flow and each single-feature ablation, one table per setting."""
    tables = []
    for name in settings or list(ABLATIONS):
        ablated = config.with_overrides(**ABLATIONS[name])
        tables.append(await run_benchmark(cases, ablated, n, gw, Path(out_dir) / name, setting=name))
    return tables


def table_rows(table: BenchmarkTable) -> list[TableRow]:
    """Per-case rows, then ``Avg`` (mean Pass@k) and ``Solve`` (cases with a success)."""
    rows = []
    for r in table.results:
        rows.append(
            TableRow(
                label=r.case_id,
                difficulty=r.difficulty,
                n=r.n,
                c=r.c,
                pass_at={k: pass_at_k(r.n, r.c, k) if k <= r.n else None for k in table.ks},
            )
        )
    avg = {}
    for k in table.ks:
        values = [row.pass_at[k] for row in rows if row.pass_at[k] is not None]
        avg[k] = float(np.mean(values)) if values else None
    rows.append(TableRow(label="Avg", pass_at=avg))
    rows.append(TableRow(label="Solve", c=sum(r.c > 0 for r in table.results), n=len(table.results)))
    return rows


def _percent(value: float | None) -> str:
    return "-" if value is None else f"{100 * value:.1f}"


def _cells(row: TableRow, ks: tuple[int, ...]) -> list[str]:
    if row.label == "Solve":
        return [row.label, "", "", f"{row.c}/{row.n}"] + ["" for _ in ks]
    counts = ["", ""] if row.n is None else [str(row.n), str(row.c)]
    return [row.label, row.difficulty, *counts] + [_percent(row.pass_at[k]) for k in ks]


def _header(ks: tuple[int, ...]) -> list[str]:
    return ["Case", "Difficulty", "n", "c"] + [f"Pass@{k}" for k in ks]


def write_csv(table: BenchmarkTable, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(_header(table.ks))
        for row in table_rows(table):
            writer.writerow(_cells(row, table.ks))
    return path


def format_markdown(table: BenchmarkTable) -> str:
    header = _header(table.ks)
    lines = [
        f"### {table.setting}",
        "",
        "| " + " | ".join(header) + " |",
        "|" + "|".join("---" for _ in header) + "|",
    ]
    for row in table_rows(table):
        lines.append("| " + " | ".join(_cells(row, table.ks)) + " |")
    breakdown = {}
    for r in table.results:
        for stage in r.failures:
            if stage != "none":
                breakdown[stage] = breakdown.get(stage, 0) + 1
    if breakdown:
        lines += ["", "Failures: " + ", ".join(f"{stage} {count}" for stage, count in sorted(breakdown.items()))]
    return "\n".join(lines) + "\n"


def write_tables(table: BenchmarkTable, out_dir: Path) -> tuple[Path, Path]:
    """``<setting>.csv`` and ``<setting>.md`` under ``out_dir``."""
    out_dir = Path(out_dir)
    csv_path = write_csv(table, out_dir / f"{table.setting}.csv")
    md_path = out_dir / f"{table.setting}.md"
    md_path.write_text(format_markdown(table), encoding="utf-8")
    (out_dir / f"{table.setting}.json").write_text(table.model_dump_json(indent=2), encoding="utf-8")
    logger.info(f"Wrote {csv_path} and {md_path}")
    return csv_path, md_path
