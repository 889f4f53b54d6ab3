"""Batch ngspice adapter: deck generation, subprocess run, measurement parsing."""

import re
import shutil
import subprocess
import tempfile
from pathlib import Path

from analogflow.core.config import AdapterSettings
from analogflow.core.exceptions import MeasureParseError, SimulationTimeout, SimulatorNotFound
from analogflow.core.logging import get_logger
from analogflow.src.netlist.parser import serialize
from analogflow.src.netlist.schemas import DeviceKind, NetlistIR, RailRole

logger = get_logger(__name__)

MEASURE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)", re.MULTILINE)
# pruning steps, in order
STAGES = ("op", "ac", "tran")


def find_simulator(adapter: AdapterSettings) -> Path:
    """Raises: SimulatorNotFound"""
    if adapter.simulator is not None:
        path = Path(adapter.simulator)
        if path.is_file():
            return path
        raise SimulatorNotFound(f"Simulator not found at {path}")
    found = shutil.which("ngspice")
    if found is None:
        raise SimulatorNotFound("ngspice is not on PATH")
    return Path(found)


def _body(ir: NetlistIR) -> str:
    return serialize(ir).rsplit(".end", 1)[0].rstrip()


def _supply(ir: NetlistIR) -> str | None:
    vdd = set(ir.nets_with_role(RailRole.VDD))
    for d in ir.devices:
        if d.kind == DeviceKind.V and d.net("P") in vdd:
            return d.id
    return None


def _output(ir: NetlistIR) -> str:
    outputs = ir.nets_with_role(RailRole.OUTPUT)
    return outputs[0] if outputs else ir.nets[-1]


def build_deck(ir: NetlistIR, stage: str, adapter: AdapterSettings) -> str:
    """Netlist plus a control block measuring one stage."""
    lines = ["* analogflow sizing deck", f".temp {adapter.temperature:g}"]
    if adapter.pdk_include is not None:
        lines.append(f'.lib "{adapter.pdk_include}" {adapter.corner}')
    lines += [_body(ir), ".control", "set noaskquit"]
    if stage == "op":
        lines.append("op")
        supply = _supply(ir)
        if supply is not None:
            vdd = ir.device(supply).net("P")
            lines += [f"let power_w = -v({vdd})*i({supply.lower()})", "echo power_w = $&power_w"]
    elif stage == "ac":
        out = _output(ir)
        lines += [
            "ac dec 50 1 1e11",
            f"meas ac gain_db max vdb({out})",
            f"meas ac gbw_hz when vdb({out})=0 fall=1",
            f"meas ac f3db_hz when vdb({out})=gain_db-3 fall=1",
        ]
    elif stage == "tran":
        out = _output(ir)
        stop = f"{adapter.tran_stop:g}"
        lines += [
            f"tran {adapter.tran_step:g} {stop}",
            f"meas tran vout_avg avg v({out}) from=0 to={stop}",
            f"meas tran vout_pp pp v({out}) from=0 to={stop}",
        ]
    else:
        raise ValueError(f"unknown analysis stage {stage!r}")
    lines += ["quit", ".endc", ".end"]
    return "\n".join(lines) + "\n"


def parse_measurements(output: str) -> dict[str, float]:
    return {name.lower(): float(value) for name, value in MEASURE.findall(output)}


def run_stage(ir: NetlistIR, stage: str, adapter: AdapterSettings, workdir: Path | None = None) -> dict[str, float]:
    """Simulate one analysis stage and return its measurements.

    Raises:
        SimulatorNotFound: If the binary is missing
        SimulationTimeout: If the run exceeds the adapter timeout
        MeasureParseError: If the output carries no measurement
    """
    simulator = find_simulator(adapter)
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        deck = Path(tmp) / f"{stage}.sp"
        deck.write_text(build_deck(ir, stage, adapter), encoding="utf-8")
        try:
            result = subprocess.run(
                [str(simulator), "-b", str(deck)],
                capture_output=True,
                text=True,
                timeout=adapter.timeout_s,
                cwd=tmp,
            )
        except subprocess.TimeoutExpired as e:
            raise SimulationTimeout(f"{stage} analysis exceeded {adapter.timeout_s}s") from e
    measured = parse_measurements(result.stdout)
    if not measured:
        logger.debug(f"Simulator output for {stage}:\n{result.stdout}\n{result.stderr}")
        raise MeasureParseError(f"No measurements in {stage} output (exit status {result.returncode})")
    return measured
