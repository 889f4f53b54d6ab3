class AnalogFlowException(Exception):
    """Base exception for pipeline errors, tagged with the failing stage."""

    stage = "pipeline"

    def __init__(self, detail: str = "Pipeline error"):
        super().__init__(detail)
        self.detail = detail


class ConfigError(AnalogFlowException):
    """Invalid or incomplete run configuration."""

    stage = "config"

    def __init__(self, detail: str = "Invalid configuration"):
        super().__init__(detail)


class SpiceSyntaxError(AnalogFlowException):
    """Malformed SPICE card."""

    stage = "netlist"

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class UnsupportedCard(AnalogFlowException):
    """SPICE card outside the supported subset."""

    stage = "netlist"

    def __init__(self, name: str):
        super().__init__(f"Unsupported card: {name}")
        self.name = name


class StructureError(AnalogFlowException):
    """Netlist violates a structural invariant."""

    stage = "netlist"

    def __init__(self, detail: str = "Invalid netlist structure"):
        super().__init__(detail)


class DimensionMismatch(AnalogFlowException):
    """Image size differs from the detection set."""

    stage = "extract"

    def __init__(self, detail: str = "Image dimensions do not match detections"):
        super().__init__(detail)


class MissingArtifact(AnalogFlowException):
    """A required input artifact is absent."""

    stage = "netlist"

    def __init__(self, detail: str = "Required artifact not found"):
        super().__init__(detail)


class ReplayMiss(AnalogFlowException):
    """No replay fixture for the request hash."""

    stage = "llm"

    def __init__(self, request_hash: str):
        super().__init__(f"No replay fixture for request {request_hash}")
        self.request_hash = request_hash


class LLMHttpError(AnalogFlowException):
    """Chat backend answered with a non-success status."""

    stage = "llm"

    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"Chat backend returned HTTP {status} {detail}".rstrip())
        self.status = status


class LLMTimeout(AnalogFlowException):
    """Chat backend did not answer in time."""

    stage = "llm"

    def __init__(self, detail: str = "Chat request timed out"):
        super().__init__(detail)


class NoParsableHypothesis(AnalogFlowException):
    """No reasoning branch produced a parsable netlist."""

    stage = "netlist"

    def __init__(self, detail: str = "No branch produced a parsable netlist"):
        super().__init__(detail)


class DomainError(AnalogFlowException):
    """Argument outside the mathematical domain of an operation."""

    stage = "eval"

    def __init__(self, detail: str = "Argument out of domain"):
        super().__init__(detail)


class AgentBudgetExhausted(AnalogFlowException):
    """Search agent hit its step limit; carries the fallback-filled space."""

    stage = "size"

    def __init__(self, space=None, detail: str = "Search agent exhausted its step budget"):
        super().__init__(detail)
        self.space = space


class MissingMetric(AnalogFlowException):
    """A spec metric was not produced by the evaluator."""

    stage = "size"

    def __init__(self, name: str):
        super().__init__(f"Metric missing from evaluation: {name}")
        self.name = name


class AllTrialsFailed(AnalogFlowException):
    """No sizing trial completed."""

    stage = "size"

    def __init__(self, detail: str = "All sizing trials failed"):
        super().__init__(detail)


class UnsupportedTopology(AnalogFlowException):
    """Netlist matches no analytic amplifier template."""

    stage = "size"

    def __init__(self, detail: str = "Topology not supported by the analytic evaluator"):
        super().__init__(detail)


class SimulatorNotFound(AnalogFlowException):
    """External simulator binary is not available."""

    stage = "size"

    def __init__(self, detail: str = "Simulator binary not found"):
        super().__init__(detail)


class SimulationTimeout(AnalogFlowException):
    """External simulator exceeded its time limit."""

    stage = "size"

    def __init__(self, detail: str = "Simulation timed out"):
        super().__init__(detail)


class MeasureParseError(AnalogFlowException):
    """Simulator output lacks an expected measurement."""

    stage = "size"

    def __init__(self, detail: str = "Could not parse simulator measurements"):
        super().__init__(detail)


class PinOffGrid(AnalogFlowException):
    """Pin projection lands on an obstacle or outside the lattice."""

    stage = "route"

    def __init__(self, detail: str = "Pin projection collides with an obstacle"):
        super().__init__(detail)


class Unreachable(AnalogFlowException):
    """No path exists for a net."""

    stage = "route"

    def __init__(self, net: str):
        super().__init__(f"No route for net {net}")
        self.net = net


class RoutingFailed(AnalogFlowException):
    """One or more nets could not be routed."""

    stage = "route"

    def __init__(self, nets: list[str]):
        super().__init__(f"Unrouted nets: {', '.join(nets)}")
        self.nets = nets


class MissingFixture(AnalogFlowException):
    """Benchmark case directory is incomplete."""

    stage = "eval"

    def __init__(self, case: str, detail: str = ""):
        super().__init__(f"Incomplete fixture for case {case} {detail}".rstrip())
        self.case = case
