"""Search-space planning agent: one planning call, then Thought/Action/Observation steps."""

import re

from analogflow.core.config import AnalyticModelSettings, SizingSettings
from analogflow.core.exceptions import AgentBudgetExhausted, AnalogFlowException
from analogflow.core.logging import get_logger
from analogflow.prompts import load_prompt
from analogflow.src.llm.schemas import ChatMessage, Transcript, TranscriptEntry, TruncationPolicy
from analogflow.src.llm.service import LLMGateway, truncate_context
from analogflow.src.netlist.parser import parse_value, serialize
from analogflow.src.netlist.schemas import MOS_KINDS, DeviceKind, NetlistIR, natural_key
from analogflow.src.placement.service import derive_symmetry_pairs
from analogflow.src.sizing.circuit import analytic_metrics, apply_sizing, recognize
from analogflow.src.sizing.schemas import Dim, ParameterSpace

logger = get_logger(__name__)

ACTION = re.compile(r"Action:\s*([a-z_]+)\s*\((.*)\)\s*$", re.MULTILINE)
THOUGHT = re.compile(r"Thought:\s*(.*?)(?=^Action:|\Z)", re.DOTALL | re.MULTILINE)

MOS_FALLBACK = {
    "W": (0.42e-6, 100e-6, "log", "m"),
    "L": (0.15e-6, 4e-6, "log", "m"),
}
VALUE_FALLBACK = {
    DeviceKind.R: (100.0, 1e6, "log", "ohm"),
    DeviceKind.C: (10e-15, 10e-12, "log", "F"),
    DeviceKind.I: (1e-6, 1e-3, "log", "A"),
    DeviceKind.V: (0.0, 1.8, "linear", "V"),
}


def sizing_dims(ir: NetlistIR) -> tuple[list[Dim], dict[str, str]]:
    """Fallback-ranged dimensions for every sizable parameter, plus symmetric-pair ties.

    MOS devices contribute W and L, resistors, capacitors and current sources
    their value, and voltage sources whose positive node is not a rail their
    bias. The second member of each symmetric pair copies the first.
    """
    ties = {}
    for leader, follower in derive_symmetry_pairs(ir):
        for param in MOS_FALLBACK:
            ties[f"{follower}.{param}"] = f"{leader}.{param}"
    dims = []
    for d in sorted(ir.devices, key=lambda d: natural_key(d.id)):
        if d.kind in MOS_KINDS:
            for param, (lo, hi, scale, unit) in MOS_FALLBACK.items():
                name = f"{d.id}.{param}"
                if name not in ties:
                    dims.append(Dim(name=name, lo=lo, hi=hi, scale=scale, unit=unit))
        elif d.kind in VALUE_FALLBACK:
            if d.kind == DeviceKind.V and d.net("P") in ir.rails:
                continue
            lo, hi, scale, unit = VALUE_FALLBACK[d.kind]
            dims.append(Dim(name=f"{d.id}.VALUE", lo=lo, hi=hi, scale=scale, unit=unit))
    return dims, ties


def parse_action(text: str) -> tuple[str, list[str]] | None:
    """Last ``Action: name(args)`` line of a reply."""
    matches = ACTION.findall(text)
    if not matches:
        return None
    name, args = matches[-1]
    return name, [a.strip() for a in args.split(",") if a.strip()]


class SearchAgent:
    """Narrows fallback ranges through in-process tools; keeps a truncated transcript."""

    def __init__(
        self,
        ir: NetlistIR,
        gw: LLMGateway,
        settings: SizingSettings | None = None,
        analytic: AnalyticModelSettings | None = None,
        temperature: float = 0.2,
        prompt_version: str = "v1",
    ):
        self.ir = ir
        self.gw = gw
        self.settings = settings or SizingSettings()
        self.analytic = analytic or AnalyticModelSettings()
        self.temperature = temperature
        self.prompt_version = prompt_version
        self.fallback, self.ties = sizing_dims(ir)
        self.proposed: dict[str, Dim] = {}
        self.transcript = Transcript()
        self.steps = 0

    @property
    def pending(self) -> list[str]:
        return [d.name for d in self.fallback if d.name not in self.proposed]

    # tools
    def topology_query(self) -> str:
        lines = []
        try:
            model = recognize(self.ir, self.analytic)
            lines.append(f"template: {model.template} ({', '.join(f'{k}={v}' for k, v in model.roles.items())})")
        except AnalogFlowException as e:
            lines.append(f"template: none ({e.detail})")
        for d in self.ir.devices:
            ports = " ".join(f"{role}={net}" for role, net in d.ports)
            lines.append(f"{d.id} {d.kind.value} {ports}")
        pairs = derive_symmetry_pairs(self.ir)
        if pairs:
            lines.append("symmetric pairs: " + ", ".join(f"{a}/{b}" for a, b in pairs))
        return "\n".join(lines)

    def operating_point_query(self, args: list[str]) -> str:
        x = {}
        for arg in args:
            name, _, value = arg.partition("=")
            x[name.strip()] = parse_value(value.strip())
        try:
            sized = apply_sizing(self.ir, x, self.ties)
            metrics = analytic_metrics(sized, self.analytic)
            points = recognize(sized, self.analytic).points
        except (AnalogFlowException, ValueError) as e:
            return f"operating point failed: {getattr(e, 'detail', e)}"
        lines = [f"{k} = {v:.4g}" for k, v in metrics.items()]
        lines += [f"{dev}: Id={p.i_d:.3g} A, Vov={p.vov:.3g} V, gm={p.gm:.3g} S" for dev, p in points.items()]
        return "\n".join(lines)

    def range_propose(self, args: list[str]) -> str:
        if len(args) != 3:
            return "range_propose needs DIM, LO, HI"
        name = args[0]
        fallback = next((d for d in self.fallback if d.name == name), None)
        if fallback is None:
            return f"unknown dimension {name}; pending: {', '.join(self.pending)}"
        try:
            lo, hi = parse_value(args[1]), parse_value(args[2])
            dim = Dim(name=name, lo=lo, hi=hi, scale=fallback.scale, unit=fallback.unit)
        except (AnalogFlowException, ValueError) as e:
            return f"rejected {name}: {getattr(e, 'detail', e)}"
        self.proposed[name] = dim
        return f"accepted {name} in [{lo:.4g}, {hi:.4g}] {fallback.unit} ({fallback.scale})"

    def _observe(self, action: tuple[str, list[str]] | None) -> str:
        if action is None:
            return "No Action found. Reply with one Action: line."
        name, args = action
        if name == "topology_query":
            return self.topology_query()
        if name == "operating_point_query":
            return self.operating_point_query(args)
        if name == "range_propose":
            return self.range_propose(args)
        return f"unknown action {name}"

    def _todo(self) -> str:
        return load_prompt("agent_step", self.prompt_version).format(pending=", ".join(self.pending) or "none")

    async def run(self, compressed_context: str, tag: str = "run") -> ParameterSpace:
        """Plan, then iterate until every dimension has a range or the step budget is spent.

        Raises:
            AgentBudgetExhausted: If the step budget ran out; carries the fallback-filled space
        """
        version = self.prompt_version
        system = ChatMessage(role="system", text=load_prompt("agent_system", version))
        task = load_prompt("agent_plan", version).format(
            netlist=serialize(self.ir),
            context=compressed_context or "(none)",
            dims=", ".join(d.name for d in self.fallback),
        )
        plan = await self.gw.complete(
            self.gw.request(
                [system, ChatMessage(role="user", text=task)], tag=f"{tag}:agent:plan", temperature=self.temperature
            )
        )
        self.transcript = Transcript(
            entries=[
                TranscriptEntry(kind="plan", role="user", text=task),
                TranscriptEntry(kind="plan", role="assistant", text=plan),
                TranscriptEntry(kind="todo", role="user", text=self._todo()),
            ]
        )
        policy = TruncationPolicy(keep_thoughts=self.settings.keep_thoughts)
        finished = False
        while self.pending and self.steps < self.settings.agent_max_steps:
            reply = await self.gw.complete(
                self.gw.request(
                    [system, *self.transcript.to_messages()],
                    tag=f"{tag}:agent:step:{self.steps}",
                    temperature=self.temperature,
                )
            )
            self.steps += 1
            thought = THOUGHT.search(reply)
            action = parse_action(reply)
            t = self.transcript
            t = t.append("thought", "assistant", thought.group(1).strip() if thought else reply.strip())
            if action is not None and action[0] == "finish":
                t = t.append("action", "assistant", "finish()")
                self.transcript = t
                finished = True
                break
            t = t.append("action", "assistant", f"{action[0]}({', '.join(action[1])})" if action else "(none)")
            t = t.append("tool_result", "tool", self._observe(action))
            self.transcript = truncate_context(t.with_todo(self._todo()), policy)

        space = self._space(tag)
        if self.pending and not finished and self.steps >= self.settings.agent_max_steps:
            raise AgentBudgetExhausted(
                space=space, detail=f"Search agent used {self.steps} steps; {len(space.fallback)} ranges from fallback"
            )
        logger.info(f"Search space: {len(self.proposed)} agent ranges, {len(space.fallback)} fallback")
        return space

    def _space(self, tag: str) -> ParameterSpace:
        dims = [self.proposed.get(d.name, d) for d in self.fallback]
        return ParameterSpace(
            dims=dims,
            provenance=f"{tag}:agent",
            fallback=[d.name for d in self.fallback if d.name not in self.proposed],
            ties=self.ties,
        )


async def plan_search_space(
    ir: NetlistIR,
    compressed_context: str,
    gw: LLMGateway,
    settings: SizingSettings | None = None,
    analytic: AnalyticModelSettings | None = None,
    tag: str = "run",
    temperature: float = 0.2,
    prompt_version: str = "v1",
) -> ParameterSpace:
    agent = SearchAgent(ir, gw, settings, analytic, temperature, prompt_version)
    return await agent.run(compressed_context, tag)
