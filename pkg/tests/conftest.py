import asyncio

import numpy as np
import pytest

from analogflow.src.llm.backends import RecordingBackend, ReplayBackend
from analogflow.src.llm.repository import FixtureRepository
from analogflow.src.llm.service import LLMGateway
from analogflow.src.netlist.parser import parse_spice
from analogflow.src.netlist.schemas import Device, DeviceKind, NetlistIR, PORT_ROLES

FIVE_T_AMP = """* five-transistor OTA
M1 x inp tail GND nfet W=2u L=1u
M2 out inn tail GND nfet W=2u L=1u
M3 x x vdd vdd pfet W=4u L=1u
M4 out x vdd vdd pfet W=4u L=1u
M5 tail vb GND GND nfet W=4u L=1u
V1 vdd 0 DC 1.8
V2 inp 0 DC 0.9 AC 1
V3 inn 0 DC 0.9
V4 vb 0 DC 0.7
.end
"""

COMMON_SOURCE = """* common-source stage with resistive load
M1 out in 0 0 nfet W=10u L=1u
R1 vdd out 20k
V1 vdd 0 DC 1.8
V2 in 0 DC 0.7 AC 1
.end
"""

TWO_STAGE = """* two-stage amplifier core
M1 x inp tail GND nmos W=2u L=1u
M2 y inn tail GND nmos W=2u L=1u
M3 x x vdd vdd pmos W=4u L=1u
M4 y x vdd vdd pmos W=4u L=1u
M5 tail vb GND GND nmos W=4u L=1u
M6 out y vdd vdd pmos W=8u L=1u
M7 out vb GND GND nmos W=4u L=1u
C1 y out 1p
.end
"""

RANDOM_KINDS = (DeviceKind.NMOS, DeviceKind.PMOS, DeviceKind.R, DeviceKind.C, DeviceKind.V, DeviceKind.D)
RANDOM_NETS = ("a", "b", "c", "d", "vdd", "GND")
LETTERS = {
    DeviceKind.NMOS: "M",
    DeviceKind.PMOS: "M",
    DeviceKind.R: "R",
    DeviceKind.C: "C",
    DeviceKind.V: "V",
    DeviceKind.D: "D",
}


def make_random_netlist(rng: np.random.Generator, n_devices: int, nets=RANDOM_NETS) -> NetlistIR:
    """Random valid netlist over a small net pool."""
    devices = []
    for index in range(n_devices):
        kind = RANDOM_KINDS[rng.integers(len(RANDOM_KINDS))]
        roles = PORT_ROLES[kind]
        ports = tuple((role, nets[rng.integers(len(nets))]) for role in roles)
        if kind in (DeviceKind.NMOS, DeviceKind.PMOS):
            params = {"W": float(rng.uniform(0.5e-6, 20e-6)), "L": float(rng.uniform(0.15e-6, 2e-6))}
        else:
            params = {"VALUE": float(rng.uniform(0.1, 1e4))}
        devices.append(Device(id=f"{LETTERS[kind]}{index + 1}", kind=kind, ports=ports, params=params))
    return NetlistIR.build(devices)


def rename_netlist(ir: NetlistIR, rng: np.random.Generator) -> NetlistIR:
    """Rename internal nets and device ids, shuffle device order."""
    internal = [n for n in ir.nets if n not in ir.rails]
    fresh = [f"w{i}" for i in rng.permutation(len(internal))]
    mapping = dict(zip(internal, fresh))
    devices = []
    for new_index, i in enumerate(rng.permutation(len(ir.devices))):
        d = ir.devices[i]
        devices.append(
            Device(
                id=f"{d.id[0]}{100 + new_index}",
                kind=d.kind,
                ports=tuple((role, mapping.get(net, net)) for role, net in d.ports),
                params=d.params,
            )
        )
    return NetlistIR.build(devices)


@pytest.fixture
def five_t_amp() -> NetlistIR:
    return parse_spice(FIVE_T_AMP)


@pytest.fixture
def common_source() -> NetlistIR:
    return parse_spice(COMMON_SOURCE)


@pytest.fixture
def two_stage() -> NetlistIR:
    return parse_spice(TWO_STAGE)


def draw_schematic():
    """Synthetic 160x100 schematic: three wires cut by three component boxes."""
    from analogflow.src.vision.schemas import DetectionSet

    image = np.full((100, 160), 255, dtype=np.uint8)
    image[30:32, 10:151] = 0  # wire A
    image[30:91, 80:82] = 0  # wire B
    image[70:72, 20:141] = 0  # wire C
    det = DetectionSet.model_validate(
        {
            "image": {"w": 160, "h": 100},
            "components": [
                {"id": "R1", "class": "Resistor", "bbox": [40, 22, 20, 18], "conf": 0.97},
                {"id": "M1", "class": "MOSFET", "bbox": [100, 62, 20, 18], "conf": 0.91},
                {"id": "C1", "class": "Capacitor", "bbox": [74, 45, 14, 12], "conf": 0.88},
            ],
            "text_boxes": [[10, 5, 30, 10]],
        }
    )
    return image, det


@pytest.fixture
def schematic():
    return draw_schematic()


class ScriptedBackend:
    """Chat backend answering from a function of the request; counts calls."""

    def __init__(self, responder, delay: float = 0.0):
        self.responder = responder
        self.delay = delay
        self.requests = []
        self.in_flight = 0
        self.peak_in_flight = 0

    async def complete(self, req) -> str:
        self.requests.append(req)
        self.in_flight += 1
        self.peak_in_flight = max(self.peak_in_flight, self.in_flight)
        try:
            if self.delay:
                await asyncio.sleep(self.delay)
            return self.responder(req)
        finally:
            self.in_flight -= 1


def recording_gateway(fixtures_dir, responder, model: str = "test-model"):
    """Gateway that records scripted answers as replay fixtures."""
    scripted = ScriptedBackend(responder)
    backend = RecordingBackend(scripted, FixtureRepository(fixtures_dir))
    return LLMGateway(backend, model=model), scripted


def replay_gateway(fixtures_dir, model: str = "test-model"):
    return LLMGateway(ReplayBackend(FixtureRepository(fixtures_dir)), model=model)
