"""SPICE subset reader and writer."""

import re

from analogflow.core.config import RailSettings
from analogflow.core.exceptions import SpiceSyntaxError, UnsupportedCard
from analogflow.core.logging import get_logger
from analogflow.src.netlist.schemas import (
    MOS_KINDS,
    NON_POLAR,
    PORT_ROLES,
    SOURCE_KINDS,
    Device,
    DeviceKind,
    ModelCard,
    NetlistIR,
    Subcircuit,
    natural_key,
    normalize_net,
)

logger = get_logger(__name__)

SI_SUFFIXES = {
    "f": 1e-15,
    "p": 1e-12,
    "n": 1e-9,
    "u": 1e-6,
    "m": 1e-3,
    "k": 1e3,
    "g": 1e9,
}

IGNORED_DIRECTIVES = frozenset(
    {
        ".op", ".ac", ".dc", ".tran", ".noise", ".temp", ".option", ".options",
        ".include", ".inc", ".lib", ".endl", ".global", ".title", ".save",
        ".print", ".plot", ".probe", ".meas", ".measure", ".ic", ".nodeset",
    }
)

_NUMBER = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)([a-zA-Z]*)$")


def parse_value(token: str) -> float:
    """Parse a SPICE number with an optional scale suffix ('meg' before 'm')."""
    match = _NUMBER.match(token.strip())
    if not match:
        raise ValueError(f"not a number: {token!r}")
    number, suffix = match.groups()
    suffix = suffix.lower()
    if suffix.startswith("meg"):
        scale = 1e6
    elif suffix and suffix[0] in SI_SUFFIXES:
        scale = SI_SUFFIXES[suffix[0]]
    else:
        # Trailing unit letters (V, A, ohm) carry no scale.
        scale = 1.0
    return float(number) * scale


def format_value(value: float) -> str:
    """Shortest exact text for a quantity; integral values print without a dot."""
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def _logical_lines(text: str) -> list[tuple[int, str]]:
    lines: list[tuple[int, str]] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0]
        line = re.split(r"\s\$", line, maxsplit=1)[0].strip()
        if not line or line.startswith("*"):
            continue
        if line.startswith("+"):
            if not lines:
                raise SpiceSyntaxError(number, "continuation line without a preceding card")
            start, previous = lines[-1]
            lines[-1] = (start, f"{previous} {line[1:].strip()}")
            continue
        lines.append((number, line))
    return lines


def _tokenize(line: str) -> list[str]:
    """Split a card, keeping ``name(args)`` groups such as PULSE(...) together."""
    line = re.sub(r"\s*=\s*", "=", line)
    raw = line.replace("(", " ( ").replace(")", " ) ").replace(",", " ").split()
    tokens: list[str] = []
    i = 0
    while i < len(raw):
        token = raw[i]
        if i + 1 < len(raw) and raw[i + 1] == "(":
            depth, j, args = 0, i + 1, []
            while j < len(raw):
                if raw[j] == "(":
                    depth += 1
                elif raw[j] == ")":
                    depth -= 1
                    if depth == 0:
                        break
                else:
                    args.append(raw[j])
                j += 1
            tokens.append(f"{token}({' '.join(args)})")
            i = j + 1
            continue
        if token not in ("(", ")"):
            tokens.append(token)
        i += 1
    return tokens


def _split_params(tokens: list[str], lineno: int) -> tuple[list[str], dict[str, float]]:
    positional: list[str] = []
    params: dict[str, float] = {}
    for token in tokens:
        if "=" in token:
            key, _, value = token.partition("=")
            try:
                params[key.upper()] = parse_value(value)
            except ValueError:
                raise SpiceSyntaxError(lineno, f"bad value for {key}: {value!r}")
        else:
            positional.append(token)
    return positional, params


class _PendingDevice:
    """Element card whose polarity may depend on a later '.model'."""

    def __init__(self, lineno: int, letter: str, device_id: str, nets, params, model=None, kind=None):
        self.lineno = lineno
        self.letter = letter
        self.device_id = device_id
        self.nets = nets
        self.params = params
        self.model = model
        self.kind = kind


def _value(token: str, lineno: int, what: str) -> float:
    try:
        return parse_value(token)
    except ValueError:
        raise SpiceSyntaxError(lineno, f"bad {what}: {token!r}")


def _parse_element(lineno: int, tokens: list[str]) -> _PendingDevice:
    letter = tokens[0][0].upper()
    device_id = tokens[0].upper()
    positional, params = _split_params(tokens[1:], lineno)

    if letter == "M":
        if len(positional) < 5:
            raise SpiceSyntaxError(lineno, "MOS card needs 4 nets and a model")
        if len(positional) > 5:
            raise SpiceSyntaxError(lineno, f"unexpected token {positional[5]!r}")
        return _PendingDevice(lineno, letter, device_id, positional[:4], params, model=positional[4])

    if letter == "Q":
        if len(positional) not in (4, 5):
            raise SpiceSyntaxError(lineno, "BJT card needs 3 nets and a model")
        return _PendingDevice(lineno, letter, device_id, positional[:3], params, model=positional[-1])

    if letter in "RCL":
        if len(positional) == 2 and letter in params:
            params["VALUE"] = params.pop(letter)
        elif len(positional) == 3:
            params["VALUE"] = _value(positional[2], lineno, "value")
        else:
            raise SpiceSyntaxError(lineno, f"{letter} card needs 2 nets and a value")
        kind = {"R": DeviceKind.R, "C": DeviceKind.C, "L": DeviceKind.L}[letter]
        if params["VALUE"] <= 0:
            raise SpiceSyntaxError(lineno, f"{device_id} value must be positive")
        return _PendingDevice(lineno, letter, device_id, positional[:2], params, kind=kind)

    if letter in "VI":
        if len(positional) < 2:
            raise SpiceSyntaxError(lineno, f"{letter} source needs 2 nets")
        source = {"VALUE": 0.0, **params}
        rest = positional[2:]
        i = 0
        while i < len(rest):
            word = rest[i].lower()
            if word == "dc" and i + 1 < len(rest):
                source["VALUE"] = _value(rest[i + 1], lineno, "DC value")
                i += 2
            elif word == "ac" and i + 1 < len(rest):
                source["AC"] = _value(rest[i + 1], lineno, "AC magnitude")
                i += 2
                if i < len(rest) and _NUMBER.match(rest[i]):
                    i += 1  # phase
            elif "(" in word:
                logger.warning(f"line {lineno}: ignoring transient function {rest[i]}")
                i += 1
            elif _NUMBER.match(word) and i == 0:
                source["VALUE"] = _value(word, lineno, "DC value")
                i += 1
            else:
                raise SpiceSyntaxError(lineno, f"unexpected token {rest[i]!r}")
        kind = DeviceKind.V if letter == "V" else DeviceKind.I
        return _PendingDevice(lineno, letter, device_id, positional[:2], source, kind=kind)

    if letter == "D":
        if len(positional) != 3:
            raise SpiceSyntaxError(lineno, "diode card needs 2 nets and a model")
        return _PendingDevice(lineno, letter, device_id, positional[:2], params, model=positional[2], kind=DeviceKind.D)

    raise UnsupportedCard(tokens[0])


def _resolve_kind(pending: _PendingDevice, models: dict[str, ModelCard]) -> DeviceKind:
    if pending.kind is not None:
        return pending.kind
    name = pending.model.lower()
    card = models.get(name)
    model_type = card.type if card else name
    if pending.letter == "M":
        if "pmos" in model_type or "pfet" in model_type or "pch" in model_type or model_type.startswith("p"):
            return DeviceKind.PMOS
        if "nmos" in model_type or "nfet" in model_type or "nch" in model_type or model_type.startswith("n"):
            return DeviceKind.NMOS
    else:
        if "pnp" in model_type:
            return DeviceKind.BJT_PNP
        if "npn" in model_type:
            return DeviceKind.BJT_NPN
    raise SpiceSyntaxError(pending.lineno, f"cannot infer polarity of model {pending.model}")


def _build_device(pending: _PendingDevice, models: dict[str, ModelCard]) -> Device:
    kind = _resolve_kind(pending, models)
    roles = PORT_ROLES[kind]
    if kind in MOS_KINDS:
        for name in ("W", "L"):
            if name in pending.params and pending.params[name] <= 0:
                raise SpiceSyntaxError(pending.lineno, f"{pending.device_id} {name} must be positive")
    return Device(
        id=pending.device_id,
        kind=kind,
        ports=tuple(zip(roles, pending.nets)),
        params=pending.params,
        model=pending.model.lower() if pending.model else None,
    )


def _parse_model(lineno: int, line: str) -> ModelCard:
    tokens = re.sub(r"\s*=\s*", "=", line).replace("(", " ").replace(")", " ").replace(",", " ").split()
    if len(tokens) < 3:
        raise SpiceSyntaxError(lineno, ".model needs a name and a type")
    _, params = _split_params(tokens[3:], lineno)
    return ModelCard(name=tokens[1].lower(), type=tokens[2].lower(), params=params)


def parse_spice(text: str, rails: RailSettings | None = None) -> NetlistIR:
    """Parse SPICE text into a NetlistIR.

    Args:
        text: Netlist text; '*' starts a comment line, '+' continues a card
        rails: Rail name lists used to mark VDD/GND/input/output nets

    Returns:
        NetlistIR: Parsed netlist with devices in id order

    Raises:
        SpiceSyntaxError: If a card is malformed
        UnsupportedCard: If a card is outside the supported subset
    """
    models: dict[str, ModelCard] = {}
    top: list[_PendingDevice] = []
    subckts: list[tuple[str, tuple[str, ...], list[_PendingDevice]]] = []
    current: list[_PendingDevice] = top
    in_control = False
    seen: set[str] = set()

    for lineno, line in _logical_lines(text):
        head = line.split()[0].lower()
        if in_control:
            if head == ".endc":
                in_control = False
            continue
        if head == ".control":
            logger.warning(f"line {lineno}: skipping .control block")
            in_control = True
            continue
        if head == ".end":
            break
        if head == ".model":
            card = _parse_model(lineno, line)
            models[card.name] = card
            continue
        if head == ".subckt":
            parts = line.split()
            if len(parts) < 2:
                raise SpiceSyntaxError(lineno, ".subckt needs a name")
            subckts.append((parts[1].lower(), tuple(normalize_net(p) for p in parts[2:]), []))
            current = subckts[-1][2]
            continue
        if head == ".ends":
            if current is top:
                raise SpiceSyntaxError(lineno, ".ends without .subckt")
            current = top
            continue
        if head.startswith("."):
            if head in IGNORED_DIRECTIVES:
                logger.debug(f"line {lineno}: ignoring directive {head}")
                continue
            raise UnsupportedCard(line.split()[0])

        pending = _parse_element(lineno, _tokenize(line))
        key = pending.device_id if current is top else f"{subckts[-1][0]}/{pending.device_id}"
        if key in seen:
            raise SpiceSyntaxError(lineno, f"duplicate device id {pending.device_id}")
        seen.add(key)
        current.append(pending)

    if current is not top:
        raise SpiceSyntaxError(0, "unterminated .subckt")

    devices = [_build_device(p, models) for p in top]
    subcircuits = [
        Subcircuit(
            name=name,
            ports=ports,
            devices=tuple(sorted((_build_device(p, models) for p in body), key=lambda d: natural_key(d.id))),
        )
        for name, ports, body in subckts
    ]
    return NetlistIR.build(devices, rails=rails, models=models, subcircuits=subcircuits)


def _spice_net(net: str) -> str:
    return "0" if net == "GND" else net


def _device_card(device: Device) -> str:
    nets = " ".join(_spice_net(net) for net in device.nets)
    params = device.params
    if device.kind in NON_POLAR:
        extra = [f"{k}={format_value(v)}" for k, v in sorted(params.items()) if k != "VALUE"]
        return " ".join([device.id, nets, format_value(params["VALUE"]), *extra])
    if device.kind in SOURCE_KINDS:
        card = [device.id, nets, "DC", format_value(params.get("VALUE", 0.0))]
        if "AC" in params:
            card += ["AC", format_value(params["AC"])]
        card += [f"{k}={format_value(v)}" for k, v in sorted(params.items()) if k not in ("VALUE", "AC")]
        return " ".join(card)
    extra = [f"{k}={format_value(v)}" for k, v in sorted(params.items())]
    return " ".join([device.id, nets, device.model, *extra])


def _model_card(card: ModelCard) -> str:
    if not card.params:
        return f".model {card.name} {card.type}"
    params = " ".join(f"{k}={format_value(v)}" for k, v in sorted(card.params.items()))
    return f".model {card.name} {card.type} ({params})"


def serialize(ir: NetlistIR) -> str:
    """Emit SPICE text: subcircuits, devices in id order, models, then '.end'."""
    lines: list[str] = []
    for sub in ir.subcircuits:
        lines.append(" ".join([".subckt", sub.name, *(_spice_net(p) for p in sub.ports)]))
        lines.extend(_device_card(d) for d in sub.devices)
        lines.append(f".ends {sub.name}")
    lines.extend(_device_card(d) for d in sorted(ir.devices, key=lambda d: natural_key(d.id)))
    lines.extend(_model_card(ir.models[name]) for name in sorted(ir.models))
    lines.append(".end")
    return "\n".join(lines)

