"""Canonical labelling of netlists by colour refinement and individualization."""

from collections import Counter

from analogflow.src.netlist.schemas import NON_POLAR, CanonicalForm, NetlistIR


def rail_labels(ir: NetlistIR) -> dict[str, str]:
    """Fixed labels for named rails.

    A role held by a single net is labelled by the role alone, so 'vdd' and
    'vcc' compare equal; roles shared by several nets keep the names.
    """
    counts = Counter(ir.rails.values())
    labels = {}
    for net, role in ir.rails.items():
        labels[net] = role.value if counts[role] == 1 else f"{role.value}:{net}"
    return labels


def port_signature(ir: NetlistIR) -> list[list[tuple[str, int]]]:
    """Per device, (role, net index) pairs; non-polar terminals share role 'T'."""
    index = {net: i for i, net in enumerate(ir.nets)}
    result = []
    for d in ir.devices:
        polar = d.kind not in NON_POLAR
        result.append([(role if polar else "T", index[net]) for role, net in d.ports])
    return result


def _rank(signatures: list) -> list[int]:
    order = {sig: i for i, sig in enumerate(sorted(set(signatures)))}
    return [order[sig] for sig in signatures]


class _Graph:
    def __init__(self, ir: NetlistIR):
        self.ports = port_signature(ir)
        self.kinds = [d.kind.value for d in ir.devices]
        labels = rail_labels(ir)
        self.net_labels = [labels.get(net, "") for net in ir.nets]
        self.incident: list[list[tuple[str, int]]] = [[] for _ in ir.nets]
        for dev, ports in enumerate(self.ports):
            for role, net in ports:
                self.incident[net].append((role, dev))

    def refine(self, dev_colors: list[int], net_colors: list[int]) -> tuple[list[int], list[int]]:
        classes = len(set(dev_colors)) + len(set(net_colors))
        while True:
            dev_sig = [
                (dev_colors[i], tuple(sorted((role, net_colors[n]) for role, n in ports)))
                for i, ports in enumerate(self.ports)
            ]
            net_sig = [
                (net_colors[n], tuple(sorted((role, dev_colors[d]) for role, d in inc)))
                for n, inc in enumerate(self.incident)
            ]
            dev_colors, net_colors = _rank(dev_sig), _rank(net_sig)
            refined = len(set(dev_colors)) + len(set(net_colors))
            if refined == classes:
                return dev_colors, net_colors
            classes = refined

    def certificate(self, net_colors: list[int]) -> str:
        free = sorted((c, n) for n, c in enumerate(net_colors) if not self.net_labels[n])
        name = {n: f"n{i}" for i, (_, n) in enumerate(free)}
        name.update({n: label for n, label in enumerate(self.net_labels) if label})
        lines = []
        for kind, ports in zip(self.kinds, self.ports):
            terms = [f"{role}={name[n]}" for role, n in ports]
            if ports and ports[0][0] == "T":
                terms.sort()
            lines.append(f"{kind}({','.join(terms)})")
        return ";".join(sorted(lines))

    def search(self, dev_colors: list[int], net_colors: list[int]) -> str:
        dev_colors, net_colors = self.refine(dev_colors, net_colors)
        cells: dict[int, list[int]] = {}
        for n, c in enumerate(net_colors):
            cells.setdefault(c, []).append(n)
        target = next((cells[c] for c in sorted(cells) if len(cells[c]) > 1), None)
        if target is None:
            return self.certificate(net_colors)
        best = None
        for member in target:
            individualized = list(net_colors)
            individualized[member] = -1
            candidate = self.search(dev_colors, individualized)
            if best is None or candidate < best:
                best = candidate
        return best


def canonicalize(ir: NetlistIR) -> CanonicalForm:
    """Canonical string invariant under net renaming (rails excepted) and device order."""
    graph = _Graph(ir)
    dev_colors = _rank(graph.kinds)
    net_colors = _rank(graph.net_labels)
    return CanonicalForm(certificate=graph.search(dev_colors, net_colors))


def canonical_hash(ir: NetlistIR) -> str:
    return canonicalize(ir).digest


def rail_fingerprint(ir: NetlistIR, device_id: str) -> tuple[str, ...]:
    """Kind plus the rail label seen at each port ('' for internal nets).

    Non-polar terminals are sorted, so a flipped resistor keeps its fingerprint.
    """
    labels = rail_labels(ir)
    device = ir.device(device_id)
    seen = [labels.get(net, "") for net in device.nets]
    if device.kind in NON_POLAR:
        seen.sort()
    return (device.kind.value, *seen)
