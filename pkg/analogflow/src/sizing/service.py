import math
from collections.abc import Callable
from pathlib import Path

import numpy as np

from analogflow.core.config import PipelineConfig, SizingSettings
from analogflow.core.exceptions import (
    AgentBudgetExhausted,
    AllTrialsFailed,
    AnalogFlowException,
    ConfigError,
    MissingMetric,
)
from analogflow.core.logging import get_logger
from analogflow.src.llm.service import LLMGateway
from analogflow.src.netlist.schemas import NetlistIR
from analogflow.src.netlist.service import write_netlist
from analogflow.src.sizing.agent import plan_search_space, sizing_dims
from analogflow.src.sizing.circuit import apply_sizing
from analogflow.src.sizing.evaluators import Evaluator, choose_evaluator
from analogflow.src.sizing.repository import StudyRepository
from analogflow.src.sizing.schemas import ParameterSpace, SizingResult, Spec, Trial, TrialState
from analogflow.src.sizing.tpe import tpe_suggest

logger = get_logger(__name__)

__all__ = [
    "SizingService",
    "apply_sizing",
    "best_so_far",
    "fom",
    "median_prune",
    "optimize",
    "partial_fom",
    "study_matches",
    "targets_met",
]


def _saturation(value: float, direction: str, threshold: float) -> float:
    if direction == ">=":
        return min(1.0, value / threshold)
    if value <= 0:
        return 1.0
    return min(1.0, threshold / value)


def fom(metrics: dict[str, float] | None, spec: Spec | None) -> float:
    """Weighted sum of saturating target ratios; ``None`` metrics (failed run) give -inf.

    Without a spec the evaluator's own ``fom`` metric is the objective.

    Raises:
        MissingMetric: If a target metric is absent
    """
    if metrics is None:
        return -math.inf
    if spec is None:
        if "fom" not in metrics:
            raise MissingMetric("fom")
        return float(metrics["fom"])
    total = 0.0
    for target in spec.targets:
        if target.metric not in metrics:
            raise MissingMetric(target.metric)
        total += target.weight * _saturation(metrics[target.metric], target.direction, target.threshold)
    return total


def targets_met(metrics: dict[str, float], spec: Spec | None) -> bool:
    """Every target reached; without a spec any measured point counts."""
    if spec is None:
        return True
    return all(
        t.metric in metrics and _saturation(metrics[t.metric], t.direction, t.threshold) >= 1.0 for t in spec.targets
    )


def partial_fom(metrics: dict[str, float], spec: Spec | None) -> float:
    """fom over the targets measured so far; used as the intermediate value of a staged run."""
    if spec is None:
        return float(metrics.get("fom", -math.inf))
    return sum(
        t.weight * _saturation(metrics[t.metric], t.direction, t.threshold) for t in spec.targets if t.metric in metrics
    )


def median_prune(study: list[Trial], trial: Trial, step: int, n_warmup: int = 5) -> bool:
    """True when the trial's value at ``step`` is below the median of completed trials at that step."""
    if step >= len(trial.steps):
        return False
    reported = [t.steps[step] for t in study if t.state == TrialState.COMPLETE and len(t.steps) > step]
    if len(reported) < max(1, n_warmup):
        return False
    return trial.steps[step] < float(np.median(reported))


def study_matches(study: list[Trial], space: ParameterSpace) -> bool:
    """Every stored trial was drawn over exactly the dimensions of ``space``."""
    names = set(space.names)
    return all(set(t.x) == names for t in study)


def _run_trial(
    number: int,
    x: dict[str, float],
    evaluator: Evaluator,
    spec: Spec | None,
    study: list[Trial],
    n_warmup: int,
) -> Trial:
    trial = Trial(number=number, x=x)
    last = len(evaluator.stages) - 1
    metrics: dict[str, float] = {}
    try:
        for step, reported in enumerate(evaluator.run(x)):
            metrics = dict(reported)
            if step < last:
                trial.steps.append(partial_fom(metrics, spec))
                if median_prune(study, trial, step, n_warmup):
                    return trial.model_copy(update={"metrics": metrics, "state": TrialState.PRUNED})
        value = fom(metrics, spec)
    except AnalogFlowException as e:
        logger.debug(f"Trial {number} failed: {e.detail}")
        return trial.model_copy(update={"metrics": metrics, "state": TrialState.FAILED, "error": e.detail})
    if not math.isfinite(value):
        return trial.model_copy(update={"metrics": metrics, "state": TrialState.FAILED, "error": "non-finite fom"})
    trial.steps.append(value)
    return trial.model_copy(update={"metrics": metrics, "fom": value, "state": TrialState.COMPLETE})


def optimize(
    space: ParameterSpace,
    evaluator: Evaluator,
    spec: Spec | None,
    budget: int = 100,
    rng: np.random.Generator | None = None,
    settings: SizingSettings | None = None,
    study: list[Trial] | None = None,
    on_trial: Callable[[Trial], None] | None = None,
) -> SizingResult:
    """TPE search with median pruning; stored trials count toward the budget.

    Raises:
        ConfigError: If stored trials were drawn over other dimensions
        AllTrialsFailed: If no trial completed
    """
    if study and not study_matches(study, space):
        raise ConfigError(f"Stored trials do not match the parameter space {space.names}")
    settings = settings or SizingSettings()
    rng = rng if rng is not None else np.random.default_rng(0)
    trials = list(study or [])
    while len(trials) < budget:
        x = tpe_suggest(trials, space, rng, settings.gamma, settings.n_startup, settings.n_ei_candidates)
        trial = _run_trial(len(trials), x, evaluator, spec, trials, settings.n_warmup)
        trials.append(trial)
        if on_trial is not None:
            on_trial(trial)

    completed = [t for t in trials if t.state == TrialState.COMPLETE]
    if not completed:
        raise AllTrialsFailed(f"None of {len(trials)} trials completed")
    best = max(completed, key=lambda t: (t.fom, -t.number))
    pruned = sum(t.state == TrialState.PRUNED for t in trials)
    logger.info(f"Best fom {best.fom:.4g} at trial {best.number} ({len(completed)} complete, {pruned} pruned)")
    return SizingResult(space=space, best=best, trials=trials)


def best_so_far(trials: list[Trial]) -> list[float]:
    """Running maximum of completed fom values (-inf before the first completion)."""
    trace, best = [], -math.inf
    for t in trials:
        if t.state == TrialState.COMPLETE:
            best = max(best, t.fom)
        trace.append(best)
    return trace


class SizingService:
    """Search-space planning, optimization and write-back for one netlist."""

    def __init__(self, config: PipelineConfig, gw: LLMGateway | None = None):
        self.config = config
        self.gw = gw

    async def plan(self, ir: NetlistIR, context: str = "", tag: str = "run") -> ParameterSpace:
        if self.gw is None:
            dims, ties = sizing_dims(ir)
            logger.warning("No chat gateway; every range comes from the fallback table")
            return ParameterSpace(dims=dims, provenance="fallback", fallback=[d.name for d in dims], ties=ties)
        try:
            return await plan_search_space(
                ir,
                context,
                self.gw,
                self.config.sizing,
                self.config.analytic,
                tag=tag,
                temperature=self.config.llm.agent_temperature,
                prompt_version=self.config.reasoning.prompt_version,
            )
        except AgentBudgetExhausted as e:
            logger.warning(f"{e.detail}; continuing with the filled space")
            return e.space

    def size(
        self,
        ir: NetlistIR,
        space: ParameterSpace,
        spec: Spec | None,
        rng: np.random.Generator,
        out_dir: Path,
        evaluator: Evaluator | None = None,
    ) -> tuple[NetlistIR, SizingResult]:
        """Optimize, persist the study and write the sized netlist to ``out_dir``."""
        s = self.config.sizing
        evaluator = evaluator or choose_evaluator(ir, self.config.adapter, self.config.analytic, space.ties)
        repository = StudyRepository(Path(out_dir) / "study.jsonl", study=s.study_name, storage_url=s.study_storage)
        study = repository.load()
        if not study_matches(study, space):
            logger.warning(f"Stored study {s.study_name} was drawn over other parameters; starting afresh")
            repository.clear()
            study = []
        result = optimize(
            space,
            evaluator,
            spec,
            budget=s.budget,
            rng=rng,
            settings=s,
            study=study,
            on_trial=repository.add,
        )
        sized = apply_sizing(ir, result.best.x, space.ties)
        write_netlist(sized, Path(out_dir) / "sized.sp")
        (Path(out_dir) / "space.json").write_text(space.model_dump_json(indent=2), encoding="utf-8")
        return sized, result
