"""Sized netlists and the square-law model of the supported amplifier templates."""

import math
from typing import Literal

from pydantic import BaseModel

from analogflow.core.config import AnalyticModelSettings
from analogflow.core.exceptions import DomainError, StructureError, UnsupportedTopology
from analogflow.src.netlist.schemas import MOS_KINDS, Device, DeviceKind, NetlistIR, RailRole

Template = Literal["common_source", "cascode", "diff_pair"]


def apply_sizing(ir: NetlistIR, x: dict[str, float], ties: dict[str, str] | None = None) -> NetlistIR:
    """Write ``<device>.<PARAM>`` values (and tied followers) into a copy of the IR.

    Raises:
        StructureError: If a dimension names a device absent from the netlist
    """
    values = dict(x)
    for follower, leader in (ties or {}).items():
        if leader in values:
            values[follower] = values[leader]
    updates: dict[str, dict[str, float]] = {}
    ids = {d.id for d in ir.devices}
    for name, value in values.items():
        device_id, _, param = name.partition(".")
        if device_id not in ids or not param:
            raise StructureError(f"Parameter {name} does not resolve to a device in the netlist")
        updates.setdefault(device_id, {})[param.upper()] = float(value)
    devices = tuple(
        Device.model_validate({**d.model_dump(), "params": {**d.params, **updates[d.id]}}) if d.id in updates else d
        for d in ir.devices
    )
    return ir.model_copy(update={"devices": devices})


class DevicePoint(BaseModel):
    i_d: float
    vov: float
    gm: float
    ro: float


class AmplifierModel(BaseModel):
    """Recognised template with its device roles and the square-law operating point."""

    template: Template
    roles: dict[str, str]
    output: str
    vdd: float
    points: dict[str, DevicePoint]
    load_resistance: float = math.inf


class _Circuit:
    def __init__(self, ir: NetlistIR, settings: AnalyticModelSettings):
        self.ir = ir
        self.settings = settings
        self.vdd_nets = set(ir.nets_with_role(RailRole.VDD))
        self.gnd_nets = set(ir.nets_with_role(RailRole.GND))
        self.nmos = [d for d in ir.devices if d.kind == DeviceKind.NMOS]
        self.pmos = [d for d in ir.devices if d.kind == DeviceKind.PMOS]

    def vdd(self) -> float:
        for d in self.ir.devices:
            if d.kind == DeviceKind.V and d.net("P") in self.vdd_nets and d.net("N") in self.gnd_nets:
                return d.params["VALUE"]
        return self.settings.vdd

    def bias(self, net: str) -> float | None:
        """DC voltage forced on ``net`` by a grounded source, if any."""
        for d in self.ir.devices:
            if d.kind == DeviceKind.V and d.net("P") == net and d.net("N") in self.gnd_nets:
                return d.params["VALUE"]
        return None

    def load(self, net: str, exclude: set[str]) -> Device | None:
        """Element pulling ``net`` up from the supply: resistor, current source or PMOS."""
        for d in self.ir.devices:
            if d.id in exclude:
                continue
            if d.kind == DeviceKind.R and net in d.nets and len(set(d.nets) - {net}) == 1:
                if (set(d.nets) - {net}) <= self.vdd_nets:
                    return d
            if d.kind == DeviceKind.I and d.net("P") in self.vdd_nets and d.net("N") == net:
                return d
            if d.kind == DeviceKind.PMOS and d.net("S") in self.vdd_nets and d.net("D") == net and d.net("G") != net:
                return d
        return None

    def tail_source(self, net: str) -> Device | None:
        for d in self.ir.devices:
            if d.kind == DeviceKind.I and d.net("P") == net and d.net("N") in self.gnd_nets:
                return d
            if d.kind == DeviceKind.NMOS and d.net("D") == net and d.net("S") in self.gnd_nets:
                return d
        return None

    # square law
    def kp(self, d: Device) -> float:
        return self.settings.mu_cox_n if d.kind == DeviceKind.NMOS else self.settings.mu_cox_p

    def vth(self, d: Device) -> float:
        return self.settings.vth_n if d.kind == DeviceKind.NMOS else self.settings.vth_p

    def point_from_current(self, d: Device, i_d: float) -> DevicePoint:
        if i_d <= 0:
            raise DomainError(f"{d.id}: non-positive drain current")
        vov = math.sqrt(2 * i_d / (self.kp(d) * d.params["W"] / d.params["L"]))
        return self._point(d, i_d, vov)

    def point_from_vgs(self, d: Device, vgs: float) -> DevicePoint:
        vov = vgs - self.vth(d)
        if vov <= 0:
            raise DomainError(f"{d.id}: gate drive {vgs:.3g} V is below threshold")
        return self._point(d, 0.5 * self.kp(d) * d.params["W"] / d.params["L"] * vov**2, vov)

    def _point(self, d: Device, i_d: float, vov: float) -> DevicePoint:
        lam = self.settings.lambda_length / d.params["L"]
        return DevicePoint(i_d=i_d, vov=vov, gm=2 * i_d / vov, ro=1 / (lam * i_d))


def _diff_pair(c: _Circuit) -> AmplifierModel | None:
    for i, m1 in enumerate(c.nmos):
        for m2 in c.nmos[i + 1 :]:
            tail = m1.net("S")
            if m2.net("S") != tail or tail in c.gnd_nets or m1.net("D") == m2.net("D"):
                continue
            mirror = {}
            for p in c.pmos:
                if p.net("S") not in c.vdd_nets:
                    continue
                for side in (m1, m2):
                    if p.net("D") == side.net("D"):
                        mirror[side.id] = p
            if len(mirror) != 2:
                continue
            diode = next((m for m in (m1, m2) if mirror[m.id].net("G") == m.net("D")), None)
            if diode is None:
                continue
            other = m2 if diode is m1 else m1
            if mirror[other.id].net("G") != diode.net("D"):
                continue
            source = c.tail_source(tail)
            if source is None:
                continue
            if source.kind == DeviceKind.I:
                i_tail = source.params["VALUE"]
                tail_point = None
            else:
                vb = c.bias(source.net("G"))
                if vb is None:
                    raise DomainError(f"{source.id}: tail gate has no bias source")
                tail_point = c.point_from_vgs(source, vb)
                i_tail = tail_point.i_d
            half = i_tail / 2
            points = {
                diode.id: c.point_from_current(diode, half),
                other.id: c.point_from_current(other, half),
                mirror[diode.id].id: c.point_from_current(mirror[diode.id], half),
                mirror[other.id].id: c.point_from_current(mirror[other.id], half),
            }
            if tail_point is not None:
                points[source.id] = tail_point
            return AmplifierModel(
                template="diff_pair",
                roles={
                    "input_diode_side": diode.id,
                    "input_output_side": other.id,
                    "mirror_diode": mirror[diode.id].id,
                    "mirror_output": mirror[other.id].id,
                    "tail": source.id,
                },
                output=other.net("D"),
                vdd=c.vdd(),
                points=points,
            )
    return None


def _input_current(c: _Circuit, m: Device, load: Device) -> DevicePoint:
    if load.kind == DeviceKind.I:
        return c.point_from_current(m, load.params["VALUE"])
    vgs = c.bias(m.net("G"))
    return c.point_from_vgs(m, c.settings.vin_dc if vgs is None else vgs)


def _load_point(c: _Circuit, load: Device, i_d: float) -> tuple[float, dict[str, DevicePoint]]:
    """Small-signal load resistance seen at the output."""
    if load.kind == DeviceKind.R:
        return load.params["VALUE"], {}
    if load.kind == DeviceKind.I:
        return math.inf, {}
    point = c.point_from_current(load, i_d)
    return point.ro, {load.id: point}


def _cascode(c: _Circuit) -> AmplifierModel | None:
    for m1 in c.nmos:
        if m1.net("S") not in c.gnd_nets:
            continue
        for m2 in c.nmos:
            if m2 is m1 or m2.net("S") != m1.net("D"):
                continue
            load = c.load(m2.net("D"), {m1.id, m2.id})
            if load is None:
                continue
            p1 = _input_current(c, m1, load)
            points = {m1.id: p1, m2.id: c.point_from_current(m2, p1.i_d)}
            r_load, extra = _load_point(c, load, p1.i_d)
            points.update(extra)
            return AmplifierModel(
                template="cascode",
                roles={"input": m1.id, "cascode": m2.id, "load": load.id},
                output=m2.net("D"),
                vdd=c.vdd(),
                points=points,
                load_resistance=r_load,
            )
    return None


def _common_source(c: _Circuit) -> AmplifierModel | None:
    for m in c.nmos:
        if m.net("S") not in c.gnd_nets:
            continue
        load = c.load(m.net("D"), {m.id})
        if load is None:
            continue
        p = _input_current(c, m, load)
        r_load, extra = _load_point(c, load, p.i_d)
        vdd = c.vdd()
        if load.kind == DeviceKind.R and vdd - p.i_d * r_load < p.vov:
            raise DomainError(f"{m.id} leaves saturation: {p.i_d:.3g} A through {r_load:.3g} ohm")
        return AmplifierModel(
            template="common_source",
            roles={"input": m.id, "load": load.id},
            output=m.net("D"),
            vdd=vdd,
            points={m.id: p, **extra},
            load_resistance=r_load,
        )
    return None


def recognize(ir: NetlistIR, settings: AnalyticModelSettings | None = None) -> AmplifierModel:
    """Match the IR against the diff-pair, cascode and common-source templates.

    Raises:
        UnsupportedTopology: If no template matches
        DomainError: If the bias point is outside the model's validity
    """
    c = _Circuit(ir, settings or AnalyticModelSettings())
    if len([d for d in ir.devices if d.kind in MOS_KINDS]) == 0:
        raise UnsupportedTopology("No MOS devices to model")
    for matcher in (_diff_pair, _cascode, _common_source):
        model = matcher(c)
        if model is not None:
            return model
    raise UnsupportedTopology("Netlist matches no common-source, cascode or differential-pair template")


def _parallel(a: float, b: float) -> float:
    if math.isinf(a):
        return b
    if math.isinf(b):
        return a
    return a * b / (a + b)


def analytic_metrics(ir: NetlistIR, settings: AnalyticModelSettings | None = None) -> dict[str, float]:
    """gain_db, gbw_hz, power_w and area_m2 from the square-law model."""
    settings = settings or AnalyticModelSettings()
    model = recognize(ir, settings)
    p = model.points
    if model.template == "diff_pair":
        gm = p[model.roles["input_output_side"]].gm
        gain = gm * _parallel(p[model.roles["input_output_side"]].ro, p[model.roles["mirror_output"]].ro)
        current = 2 * p[model.roles["input_output_side"]].i_d
    elif model.template == "cascode":
        p1, p2 = p[model.roles["input"]], p[model.roles["cascode"]]
        r_out = p1.ro + p2.ro + p2.gm * p1.ro * p2.ro
        gm = p1.gm
        gain = gm * _parallel(r_out, model.load_resistance)
        current = p1.i_d
    else:
        p1 = p[model.roles["input"]]
        gm = p1.gm
        gain = gm * _parallel(p1.ro, model.load_resistance)
        current = p1.i_d
    area = sum(d.params["W"] * d.params["L"] for d in ir.devices if d.kind in MOS_KINDS)
    return {
        "gain_db": 20 * math.log10(gain),
        "gbw_hz": gm / (2 * math.pi * settings.load_capacitance),
        "power_w": model.vdd * current,
        "area_m2": area,
    }
