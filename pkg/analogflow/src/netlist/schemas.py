import hashlib
import math
import re
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, model_validator

from analogflow.core.config import RailSettings


class DeviceKind(str, Enum):
    NMOS = "NMOS"
    PMOS = "PMOS"
    BJT_NPN = "BJT_NPN"
    BJT_PNP = "BJT_PNP"
    R = "R"
    C = "C"
    L = "L"
    V = "V"
    I = "I"  # noqa: E741
    D = "D"


class RailRole(str, Enum):
    VDD = "VDD"
    GND = "GND"
    INPUT = "INPUT"
    OUTPUT = "OUTPUT"


PORT_ROLES: dict[DeviceKind, tuple[str, ...]] = {
    DeviceKind.NMOS: ("D", "G", "S", "B"),
    DeviceKind.PMOS: ("D", "G", "S", "B"),
    DeviceKind.BJT_NPN: ("C", "B", "E"),
    DeviceKind.BJT_PNP: ("C", "B", "E"),
    DeviceKind.R: ("P", "N"),
    DeviceKind.C: ("P", "N"),
    DeviceKind.L: ("P", "N"),
    DeviceKind.V: ("P", "N"),
    DeviceKind.I: ("P", "N"),
    DeviceKind.D: ("A", "K"),
}

# Swapping the terminals of these kinds yields the same circuit.
NON_POLAR = frozenset({DeviceKind.R, DeviceKind.C, DeviceKind.L})

MOS_KINDS = frozenset({DeviceKind.NMOS, DeviceKind.PMOS})
BJT_KINDS = frozenset({DeviceKind.BJT_NPN, DeviceKind.BJT_PNP})
SOURCE_KINDS = frozenset({DeviceKind.V, DeviceKind.I})

DEFAULT_MODELS = {
    DeviceKind.NMOS: "nmos",
    DeviceKind.PMOS: "pmos",
    DeviceKind.BJT_NPN: "npn",
    DeviceKind.BJT_PNP: "pnp",
    DeviceKind.D: "d",
}

CARD_LETTER = {
    DeviceKind.NMOS: "M",
    DeviceKind.PMOS: "M",
    DeviceKind.BJT_NPN: "Q",
    DeviceKind.BJT_PNP: "Q",
    DeviceKind.R: "R",
    DeviceKind.C: "C",
    DeviceKind.L: "L",
    DeviceKind.V: "V",
    DeviceKind.I: "I",
    DeviceKind.D: "D",
}


def natural_key(identifier: str) -> tuple:
    """Sort key that orders M2 before M10."""
    return tuple(int(part) if part.isdigit() else part for part in re.split(r"(\d+)", identifier))


def normalize_net(name: str) -> str:
    """Net names are case-insensitive; '0' and 'gnd' both denote GND."""
    lowered = name.lower()
    return "GND" if lowered in ("0", "gnd") else lowered


def rail_role(net: str, rails: RailSettings) -> RailRole | None:
    name = net.lower()
    if net == "GND" or name in rails.gnd:
        return RailRole.GND
    if name in rails.vdd:
        return RailRole.VDD
    if name in rails.inputs:
        return RailRole.INPUT
    if name in rails.outputs:
        return RailRole.OUTPUT
    return None


class Device(BaseModel):
    """One circuit element with role-labelled ports."""

    model_config = ConfigDict(frozen=True)

    id: str
    kind: DeviceKind
    ports: tuple[tuple[str, str], ...]
    params: dict[str, float] = Field(default_factory=dict)
    model: str | None = None

    @model_validator(mode="before")
    @classmethod
    def _fill_defaults(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        kind = DeviceKind(data.get("kind"))
        if data.get("model") is None and kind in DEFAULT_MODELS:
            data["model"] = DEFAULT_MODELS[kind]
        ports = data.get("ports")
        if ports is not None:
            data["ports"] = tuple((role, normalize_net(net)) for role, net in ports)
        params = {str(k).upper(): float(v) for k, v in (data.get("params") or {}).items()}
        if kind in SOURCE_KINDS:
            params.setdefault("VALUE", 0.0)
        data["params"] = params
        return data

    @model_validator(mode="after")
    def _check(self) -> "Device":
        roles = tuple(role for role, _ in self.ports)
        if roles != PORT_ROLES[self.kind]:
            raise ValueError(f"{self.id}: ports {roles} do not match {self.kind.value} {PORT_ROLES[self.kind]}")
        for name, value in self.params.items():
            if not math.isfinite(value):
                raise ValueError(f"{self.id}: parameter {name} is not finite")
        required = ("W", "L") if self.kind in MOS_KINDS else ("VALUE",) if self.kind in NON_POLAR else ()
        if self.kind in NON_POLAR and "VALUE" not in self.params:
            raise ValueError(f"{self.id}: {self.kind.value} needs a value")
        for name in required:
            if name in self.params and self.params[name] <= 0:
                raise ValueError(f"{self.id}: {name} must be positive")
        return self

    def net(self, role: str) -> str:
        for port_role, net in self.ports:
            if port_role == role:
                return net
        raise KeyError(f"{self.id} has no port {role}")

    @property
    def nets(self) -> tuple[str, ...]:
        return tuple(net for _, net in self.ports)


class ModelCard(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    type: str
    params: dict[str, float] = Field(default_factory=dict)


class Subcircuit(BaseModel):
    """A '.subckt' body kept verbatim as devices; never flattened."""

    model_config = ConfigDict(frozen=True)

    name: str
    ports: tuple[str, ...]
    devices: tuple[Device, ...] = ()


class NetlistIR(BaseModel):
    """Typed devices, their nets and the named rails."""

    model_config = ConfigDict(frozen=True)

    devices: tuple[Device, ...] = ()
    nets: tuple[str, ...] = ()
    rails: dict[str, RailRole] = Field(default_factory=dict)
    models: dict[str, ModelCard] = Field(default_factory=dict)
    subcircuits: tuple[Subcircuit, ...] = ()

    @model_validator(mode="after")
    def _check(self) -> "NetlistIR":
        ids = [d.id for d in self.devices]
        if len(set(ids)) != len(ids):
            raise ValueError("device ids must be unique")
        nets = set(self.nets)
        touched = {net for d in self.devices for net in d.nets}
        if touched - nets:
            raise ValueError(f"ports reference unknown nets {sorted(touched - nets)}")
        if nets - touched:
            raise ValueError(f"dangling nets {sorted(nets - touched)}")
        if set(self.rails) - nets:
            raise ValueError(f"rails {sorted(set(self.rails) - nets)} are not nets")
        return self

    @classmethod
    def build(
        cls,
        devices,
        rails: RailSettings | None = None,
        models: dict[str, ModelCard] | None = None,
        subcircuits=(),
    ) -> "NetlistIR":
        """Build an IR from devices, deriving nets and marking rails by name."""
        rails = rails or RailSettings()
        devices = sorted(devices, key=lambda d: natural_key(d.id))
        nets = sorted({net for d in devices for net in d.nets})
        marked = {net: role for net in nets if (role := rail_role(net, rails)) is not None}
        return cls(
            devices=tuple(devices),
            nets=tuple(nets),
            rails=marked,
            models=dict(models or {}),
            subcircuits=tuple(subcircuits),
        )

    def device(self, device_id: str) -> Device:
        for d in self.devices:
            if d.id == device_id:
                return d
        raise KeyError(device_id)

    def nets_with_role(self, role: RailRole) -> list[str]:
        return sorted(net for net, r in self.rails.items() if r == role)

    def incidences(self) -> dict[str, list[tuple[str, str]]]:
        """net -> [(device id, role)]"""
        table: dict[str, list[tuple[str, str]]] = {net: [] for net in self.nets}
        for d in self.devices:
            for role, net in d.ports:
                table[net].append((d.id, role))
        return table


class CanonicalForm(BaseModel):
    model_config = ConfigDict(frozen=True)

    certificate: str

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.certificate.encode("utf-8")).hexdigest()


class RecoveryReport(BaseModel):
    exact_match: bool
    component_accuracy: float = Field(ge=0.0, le=1.0)
    edge_accuracy: float = Field(ge=0.0, le=1.0)
    mismatches: list[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check(self) -> "RecoveryReport":
        if self.exact_match and (self.component_accuracy != 1.0 or self.edge_accuracy != 1.0):
            raise ValueError("exact match implies perfect accuracies")
        return self


class Alignment(BaseModel):
    """Device and net correspondence from one netlist onto another."""

    device_map: dict[str, str] = Field(default_factory=dict)
    net_map: dict[str, str] = Field(default_factory=dict)
    swapped: frozenset[str] = frozenset()
