from pathlib import Path

from analogflow.core.config import RailSettings
from analogflow.core.exceptions import MissingArtifact
from analogflow.core.logging import get_logger
from analogflow.src.netlist.canonical import canonicalize
from analogflow.src.netlist.matching import align, port_pairs
from analogflow.src.netlist.parser import parse_spice, serialize
from analogflow.src.netlist.schemas import NetlistIR, RailRole, RecoveryReport

logger = get_logger(__name__)


def recovery_score(pred: NetlistIR, truth: NetlistIR) -> RecoveryReport:
    """Score a predicted netlist against the ground truth.

    Args:
        pred: Predicted netlist
        truth: Ground-truth netlist

    Returns:
        RecoveryReport: Exact-match flag plus component and edge accuracies
    """
    if canonicalize(pred) == canonicalize(truth):
        return RecoveryReport(exact_match=True, component_accuracy=1.0, edge_accuracy=1.0)

    alignment = align(pred, truth)
    truth_to_pred = {t: p for p, t in alignment.device_map.items()}
    mismatches: list[str] = []
    kinds_ok = 0
    edges_ok = 0
    edges_total = 0
    for t in truth.devices:
        edges_total += len(t.ports)
        p_id = truth_to_pred.get(t.id)
        if p_id is None:
            mismatches.append(f"missing device {t.id} ({t.kind.value})")
            continue
        p = pred.device(p_id)
        if p.kind == t.kind:
            kinds_ok += 1
        else:
            mismatches.append(f"{p.id}: kind {p.kind.value}, expected {t.kind.value} as {t.id}")
        pairs, _ = port_pairs(p, t, alignment.net_map)
        for (pn, tn), (role, _) in zip(pairs, t.ports):
            if alignment.net_map.get(pn) == tn:
                edges_ok += 1
            else:
                mismatches.append(f"{t.id}.{role}: connected to {pn}, expected {tn}")
    matched_pred = set(alignment.device_map)
    for p in pred.devices:
        if p.id not in matched_pred:
            mismatches.append(f"extra device {p.id} ({p.kind.value})")

    if truth.devices:
        component_accuracy = kinds_ok / len(truth.devices)
        edge_accuracy = edges_ok / edges_total
    else:
        component_accuracy = edge_accuracy = 0.0
    if not mismatches:
        mismatches.append("topology differs under every correspondence")
    return RecoveryReport(
        exact_match=False,
        component_accuracy=component_accuracy,
        edge_accuracy=edge_accuracy,
        mismatches=mismatches,
    )


def check_structure(ir: NetlistIR) -> list[str]:
    """Structural validity problems; an empty list means the netlist is plausible.

    Requires a VDD and a GND rail, and at least two connections on every
    net except output rails.
    """
    problems = []
    roles = set(ir.rails.values())
    if RailRole.VDD not in roles:
        problems.append("no VDD rail")
    if RailRole.GND not in roles:
        problems.append("no GND rail")
    for net, incident in ir.incidences().items():
        if len(incident) < 2 and ir.rails.get(net) != RailRole.OUTPUT:
            problems.append(f"net {net} has a single connection")
    return problems


def read_netlist(path: Path, rails: RailSettings | None = None) -> NetlistIR:
    """Read a .sp file.

    Raises:
        MissingArtifact: If the file does not exist
    """
    path = Path(path)
    if not path.is_file():
        raise MissingArtifact(f"Netlist not found: {path}")
    return parse_spice(path.read_text(encoding="utf-8"), rails=rails)


def write_netlist(ir: NetlistIR, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize(ir) + "\n", encoding="utf-8")
    logger.info(f"Wrote netlist with {len(ir.devices)} devices: {path}")
    return path
