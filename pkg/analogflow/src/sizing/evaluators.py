from collections.abc import Callable, Iterator

from analogflow.core.config import AdapterSettings, AnalyticModelSettings
from analogflow.core.exceptions import DomainError, SimulatorNotFound
from analogflow.core.logging import get_logger
from analogflow.src.netlist.schemas import NetlistIR
from analogflow.src.sizing.circuit import analytic_metrics, apply_sizing, recognize
from analogflow.src.sizing.simulator import STAGES, find_simulator, run_stage

logger = get_logger(__name__)


class Evaluator:
    """Maps a parameter vector to metrics, one dict per analysis stage.

    Metrics accumulate: each yielded dict holds everything measured so far.
    """

    stages: tuple[str, ...] = ("final",)
    name = "evaluator"

    def run(self, x: dict[str, float]) -> Iterator[dict[str, float]]:
        raise NotImplementedError


class FunctionEvaluator(Evaluator):
    """Wraps ``fn(x) -> metrics`` or ``fn(x) -> [metrics per stage]``."""

    name = "function"

    def __init__(self, fn: Callable, stages: tuple[str, ...] = ("final",)):
        self.fn = fn
        self.stages = stages

    def run(self, x: dict[str, float]) -> Iterator[dict[str, float]]:
        result = self.fn(x)
        if isinstance(result, dict):
            yield result
        else:
            yield from result


class AnalyticEvaluator(Evaluator):
    """Hermetic square-law evaluator; one step."""

    name = "analytic"

    def __init__(self, ir: NetlistIR, settings: AnalyticModelSettings | None = None, ties=None):
        self.ir = ir
        self.settings = settings or AnalyticModelSettings()
        self.ties = ties or {}
        try:
            recognize(ir, self.settings)
        except DomainError:
            # Template matched; only the unsized bias point is invalid.
            pass

    def run(self, x: dict[str, float]) -> Iterator[dict[str, float]]:
        yield analytic_metrics(apply_sizing(self.ir, x, self.ties), self.settings)


class SpiceEvaluator(Evaluator):
    """External simulator run stage by stage: operating point, AC, then transient."""

    name = "spice"
    stages = STAGES

    def __init__(self, ir: NetlistIR, adapter: AdapterSettings, ties=None):
        self.ir = ir
        self.adapter = adapter
        self.ties = ties or {}
        find_simulator(adapter)

    def run(self, x: dict[str, float]) -> Iterator[dict[str, float]]:
        sized = apply_sizing(self.ir, x, self.ties)
        metrics: dict[str, float] = {}
        for stage in self.stages:
            metrics.update(run_stage(sized, stage, self.adapter))
            yield dict(metrics)


def analytic_evaluate(ir: NetlistIR, x: dict[str, float], settings: AnalyticModelSettings | None = None):
    """Square-law metrics of the sized IR.

    Raises:
        UnsupportedTopology: If the IR matches no amplifier template
    """
    return analytic_metrics(apply_sizing(ir, x), settings)


def spice_evaluate(ir: NetlistIR, x: dict[str, float], adapter: AdapterSettings) -> dict[str, float]:
    """All simulator stages for the sized IR, merged.

    Raises:
        SimulatorNotFound: If the binary is missing
        SimulationTimeout: If a stage exceeds the timeout
        MeasureParseError: If a stage reports no measurement
    """
    reports = list(SpiceEvaluator(ir, adapter).run(x))
    return reports[-1]


def choose_evaluator(
    ir: NetlistIR,
    adapter: AdapterSettings,
    analytic: AnalyticModelSettings,
    ties: dict[str, str] | None = None,
) -> Evaluator:
    """Simulator when available, else the analytic model.

    Raises:
        UnsupportedTopology: If neither evaluator applies
    """
    try:
        return SpiceEvaluator(ir, adapter, ties)
    except SimulatorNotFound as e:
        logger.warning(f"{e.detail}; falling back to the analytic evaluator")
    return AnalyticEvaluator(ir, analytic, ties)
