"""Device and net correspondence between two netlists."""

import numpy as np
from scipy.optimize import linear_sum_assignment

from analogflow.src.netlist.canonical import rail_fingerprint, rail_labels
from analogflow.src.netlist.schemas import BJT_KINDS, MOS_KINDS, NON_POLAR, Alignment, Device, NetlistIR

REFINEMENT_ROUNDS = 3
RAIL_BONUS = 1000.0
NAME_BONUS = 1e-3


def _shape(device: Device) -> str:
    if device.kind in MOS_KINDS:
        return "mos"
    if device.kind in BJT_KINDS:
        return "bjt"
    return "two"


def _color_history(pred: NetlistIR, truth: NetlistIR) -> tuple[list[tuple], list[tuple]]:
    """Kind-blind refinement colours per device, computed on the disjoint union."""
    graphs = (pred, truth)
    labels = [rail_labels(g) for g in graphs]
    dev_color = {(g, d.id): ("dev", _shape(d)) for g, ir in enumerate(graphs) for d in ir.devices}
    net_color = {(g, n): ("net", labels[g].get(n, "")) for g, ir in enumerate(graphs) for n in ir.nets}
    incidences = [ir.incidences() for ir in graphs]
    history = {key: [color] for key, color in dev_color.items()}
    for _ in range(REFINEMENT_ROUNDS):
        dev_sig = {
            (g, d.id): (dev_color[(g, d.id)], tuple(sorted(net_color[(g, n)] for n in d.nets)))
            for g, ir in enumerate(graphs)
            for d in ir.devices
        }
        net_sig = {
            (g, n): (net_color[(g, n)], tuple(sorted(dev_color[(g, dev)] for dev, _ in incidences[g][n])))
            for g, ir in enumerate(graphs)
            for n in ir.nets
        }
        dev_color = _compress(dev_sig)
        net_color = _compress(net_sig)
        for key, color in dev_color.items():
            history[key].append(color)
    return (
        [tuple(history[(0, d.id)]) for d in pred.devices],
        [tuple(history[(1, d.id)]) for d in truth.devices],
    )


def _compress(signatures: dict) -> dict:
    order = {sig: i for i, sig in enumerate(sorted(set(signatures.values()), key=repr))}
    return {key: ("c", order[sig]) for key, sig in signatures.items()}


def port_pairs(p: Device, t: Device, net_map: dict[str, str]) -> tuple[list[tuple[str, str]], bool]:
    """Align the ports of p with those of t; non-polar pairs may be swapped."""
    if len(p.ports) != len(t.ports):
        return [], False
    straight = list(zip(p.nets, t.nets))
    if p.kind in NON_POLAR and t.kind in NON_POLAR:
        swapped = list(zip(reversed(p.nets), t.nets))
        if _agreement(swapped, net_map) > _agreement(straight, net_map):
            return swapped, True
    return straight, False


def _agreement(pairs: list[tuple[str, str]], net_map: dict[str, str]) -> int:
    return sum(1 for pn, tn in pairs if net_map.get(pn) == tn)


def _assign(score: np.ndarray) -> list[tuple[int, int]]:
    if score.size == 0:
        return []
    rows, cols = linear_sum_assignment(score, maximize=True)
    return list(zip(rows.tolist(), cols.tolist()))


def _net_assignment(
    pred: NetlistIR, truth: NetlistIR, device_map: dict[str, str], net_map: dict[str, str]
) -> dict[str, str]:
    p_index = {n: i for i, n in enumerate(pred.nets)}
    t_index = {n: i for i, n in enumerate(truth.nets)}
    score = np.zeros((len(pred.nets), len(truth.nets)))
    for p_id, t_id in device_map.items():
        pairs, _ = port_pairs(pred.device(p_id), truth.device(t_id), net_map)
        for pn, tn in pairs:
            score[p_index[pn], t_index[tn]] += 1.0
    p_labels, t_labels = rail_labels(pred), rail_labels(truth)
    for pn, label in p_labels.items():
        for tn, t_label in t_labels.items():
            if label == t_label:
                score[p_index[pn], t_index[tn]] += RAIL_BONUS
    for pn in pred.nets:
        if pn in t_index:
            score[p_index[pn], t_index[pn]] += NAME_BONUS
    return {pred.nets[i]: truth.nets[j] for i, j in _assign(score)}


def align(pred: NetlistIR, truth: NetlistIR, max_rounds: int = 5, fingerprint_weight: float = 0.0) -> Alignment:
    """Best-effort correspondence of pred's devices and nets onto truth's.

    Kind-blind refinement colours on the disjoint union seed a Hungarian
    device assignment; device and net assignments then alternate until the
    device map is stable. A positive ``fingerprint_weight`` adds that score to
    device pairs with equal kind and rail-adjacency fingerprints.
    """
    if not pred.devices or not truth.devices:
        return Alignment()
    hist_p, hist_t = _color_history(pred, truth)
    structural = np.array(
        [[sum(a == b for a, b in zip(hp, ht)) for ht in hist_t] for hp in hist_p],
        dtype=float,
    )
    kind_eq = np.array([[float(p.kind == t.kind) for t in truth.devices] for p in pred.devices])
    same_id = np.array([[float(p.id == t.id) for t in truth.devices] for p in pred.devices])
    fingerprint = np.zeros_like(kind_eq)
    if fingerprint_weight:
        t_prints = [rail_fingerprint(truth, t.id) for t in truth.devices]
        fingerprint = fingerprint_weight * np.array(
            [[float(rail_fingerprint(pred, p.id) == tp) for tp in t_prints] for p in pred.devices]
        )

    def to_map(pairs):
        return {pred.devices[i].id: truth.devices[j].id for i, j in pairs}

    device_map = to_map(_assign(2.0 * kind_eq + structural + fingerprint + NAME_BONUS * same_id))
    net_map = _net_assignment(pred, truth, device_map, {})
    for _ in range(max_rounds):
        agreement = np.array(
            [[_agreement(port_pairs(p, t, net_map)[0], net_map) for t in truth.devices] for p in pred.devices],
            dtype=float,
        )
        score = 2.0 * kind_eq + agreement + 0.25 * structural + fingerprint + NAME_BONUS * same_id
        candidate = to_map(_assign(score))
        if candidate == device_map:
            break
        device_map = candidate
        net_map = _net_assignment(pred, truth, device_map, net_map)

    swapped = frozenset(
        p_id for p_id, t_id in device_map.items() if port_pairs(pred.device(p_id), truth.device(t_id), net_map)[1]
    )
    return Alignment(device_map=device_map, net_map=net_map, swapped=swapped)
