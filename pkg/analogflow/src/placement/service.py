"""Sequence-pair placement with mirrored device pairs, annealed on area, HPWL and symmetry."""

import math
from pathlib import Path

import numpy as np

from analogflow.core.config import PlacementSettings
from analogflow.core.exceptions import MissingArtifact
from analogflow.core.logging import get_logger
from analogflow.src.netlist.schemas import (
    BJT_KINDS,
    MOS_KINDS,
    SOURCE_KINDS,
    Device,
    DeviceKind,
    NetlistIR,
    RailRole,
    natural_key,
)
from analogflow.src.placement.schemas import (
    AnnealResult,
    Block,
    CostBreakdown,
    Placement,
    PlacementArtifact,
    PlacementInstance,
    SequencePair,
)

logger = get_logger(__name__)

PASSIVE_FOOTPRINT = 2.0
EPS = 1e-9


def _is_symmetric(ir: NetlistIR, a: Device, b: Device) -> bool:
    if a.kind != b.kind or a.kind not in MOS_KINDS:
        return False
    if a.net("S") != b.net("S") or a.net("D") == b.net("D"):
        return False
    if (a.params.get("W"), a.params.get("L")) != (b.params.get("W"), b.params.get("L")):
        return False
    gate_a, gate_b = a.net("G"), b.net("G")
    if gate_a != gate_b:
        return ir.rails.get(gate_a) == RailRole.INPUT and ir.rails.get(gate_b) == RailRole.INPUT
    # shared gate only counts for a diode-connected mirror
    return gate_a in (a.net("D"), b.net("D"))


def derive_symmetry_pairs(ir: NetlistIR) -> list[tuple[str, str]]:
    """Matched MOS pairs: a differential input pair or a diode-connected current mirror.

    Both members share kind, source net and W/L, drive distinct drains, and
    are gated either by two different input nets or by one net that is the
    drain of a member. Devices are paired greedily in natural id order.
    """
    devices = sorted((d for d in ir.devices if d.kind in MOS_KINDS), key=lambda d: natural_key(d.id))
    used: set[str] = set()
    pairs = []
    for i, a in enumerate(devices):
        if a.id in used:
            continue
        for b in devices[i + 1 :]:
            if b.id not in used and _is_symmetric(ir, a, b):
                pairs.append((a.id, b.id))
                used |= {a.id, b.id}
                break
    return pairs


def _snap_up(value: float, pitch: float) -> float:
    return math.ceil(value / pitch - EPS) * pitch


def _pin_offsets(kind: DeviceKind, w: float, h: float, mirrored: bool) -> dict[str, tuple[float, float]]:
    side = w if mirrored else 0.0
    if kind in MOS_KINDS:
        return {"D": (w / 2, h), "G": (side, h / 2), "S": (w / 2, 0.0)}
    if kind in BJT_KINDS:
        return {"C": (w / 2, h), "B": (side, h / 2), "E": (w / 2, 0.0)}
    if kind == DeviceKind.D:
        return {"A": (w / 2, h), "K": (w / 2, 0.0)}
    return {"P": (w / 2, h), "N": (w / 2, 0.0)}


def instance_from_netlist(
    ir: NetlistIR,
    settings: PlacementSettings | None = None,
    pitch: float = 0.5,
) -> PlacementInstance:
    """Footprints from sized W/L, pins on the block edges, nets without sources or bulk.

    MOS footprints are (W + 2·enclosure) × (L + 2·enclosure) µm, other
    elements a fixed square; both are snapped up to the routing pitch.
    """
    settings = settings or PlacementSettings()
    pairs = derive_symmetry_pairs(ir)
    right = {b for _, b in pairs}
    blocks = []
    nets: dict[str, list[tuple[str, str]]] = {}
    for d in ir.devices:
        if d.kind in SOURCE_KINDS:
            continue
        if d.kind in MOS_KINDS:
            w = _snap_up(d.params["W"] * 1e6 + 2 * settings.enclosure, pitch)
            h = _snap_up(d.params["L"] * 1e6 + 2 * settings.enclosure, pitch)
        else:
            w = h = _snap_up(PASSIVE_FOOTPRINT, pitch)
        pins = _pin_offsets(d.kind, w, h, d.id in right)
        blocks.append(Block(id=d.id, width=w, height=h, pins=pins))
        for role, net in d.ports:
            if role in pins:
                nets.setdefault(net, []).append((d.id, role))
    return PlacementInstance(blocks=blocks, nets=nets, symmetry_pairs=pairs, spacing=settings.spacing)


# sequence-pair units: a single block or a mirrored pair packed as one macro
def _units(instance: PlacementInstance) -> dict[str, tuple[str, ...]]:
    paired = {m for pair in instance.symmetry_pairs for m in pair}
    units = {f"{a}+{b}": (a, b) for a, b in instance.symmetry_pairs}
    units.update({b.id: (b.id,) for b in instance.blocks if b.id not in paired})
    return dict(sorted(units.items(), key=lambda kv: natural_key(kv[0])))


def _unit_size(instance: PlacementInstance, members: tuple[str, ...], rotated: bool) -> tuple[float, float]:
    if len(members) == 2:
        w, h = instance.block(members[0]).size()
        return 2 * w + instance.spacing, h
    return instance.block(members[0]).size(rotated)


def _pack(order, before, sizes, axis: int, spacing: float, lower: dict[str, float]) -> dict[str, float]:
    coord: dict[str, float] = {}
    for u in order:
        coord[u] = max(
            [lower.get(u, 0.0)] + [coord[a] + sizes[a][axis] + spacing for a in coord if before(a, u)]
        )
    return coord


def realize(sp: SequencePair, instance: PlacementInstance, align_axes: bool = False) -> Placement:
    """Longest-path packing of a sequence pair, spacing added on every constraint edge.

    With ``align_axes`` every mirrored pair is shifted right onto one common
    vertical axis; pairs are always vertically related so no pair constrains
    another horizontally.
    """
    units = _units(instance)
    pos = {u: i for i, u in enumerate(sp.pos)}
    neg = {u: i for i, u in enumerate(sp.neg)}
    sizes = {u: _unit_size(instance, units[u], u in sp.rotated) for u in sp.pos}
    s = instance.spacing

    def left_of(a, b):
        return pos[a] < pos[b] and neg[a] < neg[b]

    def below(a, b):
        return pos[a] > pos[b] and neg[a] < neg[b]

    xs = _pack(sp.neg, left_of, sizes, 0, s, {})
    ys = _pack(sp.neg, below, sizes, 1, s, {})
    macros = [u for u in sp.pos if len(units[u]) == 2]
    if align_axes and len(macros) > 1:
        axis = max(xs[m] + sizes[m][0] / 2 for m in macros)
        xs = _pack(sp.neg, left_of, sizes, 0, s, {m: axis - sizes[m][0] / 2 for m in macros})

    positions: dict[str, tuple[float, float]] = {}
    rotated = []
    for u in sp.pos:
        members = units[u]
        positions[members[0]] = (xs[u], ys[u])
        if len(members) == 2:
            w = instance.block(members[0]).width
            positions[members[1]] = (xs[u] + w + s, ys[u])
        elif u in sp.rotated:
            rotated.append(u)
    width = max((xs[u] + sizes[u][0] for u in sp.pos), default=0.0)
    height = max((ys[u] + sizes[u][1] for u in sp.pos), default=0.0)
    return Placement(positions=positions, rotated=sorted(rotated, key=natural_key), bbox=(width, height))


def hpwl(p: Placement, instance: PlacementInstance, net: str) -> float:
    points = [p.pin_position(instance, block, pin) for block, pin in instance.nets[net] if block in p.positions]
    if len(points) < 2:
        return 0.0
    xs, ys = zip(*points)
    return (max(xs) - min(xs)) + (max(ys) - min(ys))


def pair_axes(p: Placement, instance: PlacementInstance) -> dict[tuple[str, str], float]:
    """Mirror axis x of every symmetric pair: midway between the member centres."""
    axes = {}
    for a, b in instance.symmetry_pairs:
        xa, _, wa, _ = p.rect(instance, a)
        xb, _, wb, _ = p.rect(instance, b)
        axes[(a, b)] = (xa + wa / 2 + xb + wb / 2) / 2
    return axes


def symmetry_penalty(p: Placement, instance: PlacementInstance) -> float:
    axes = pair_axes(p, instance)
    if not axes:
        return 0.0
    mean_axis = sum(axes.values()) / len(axes)
    return sum(abs(axis - mean_axis) + abs(p.positions[a][1] - p.positions[b][1]) for (a, b), axis in axes.items())


def cost(p: Placement, instance: PlacementInstance, settings: PlacementSettings | None = None) -> CostBreakdown:
    settings = settings or PlacementSettings()
    area = p.bbox[0] * p.bbox[1]
    wirelength = sum(hpwl(p, instance, net) for net in instance.nets)
    symmetry = symmetry_penalty(p, instance)
    total = settings.w_area * area + settings.w_wirelength * wirelength + settings.w_symmetry * symmetry
    return CostBreakdown(area=area, wirelength=wirelength, symmetry=symmetry, total=total)


def overlap_free(p: Placement, instance: PlacementInstance, spacing: float | None = None) -> bool:
    """Every pair of blocks is separated by at least ``spacing`` along some axis."""
    spacing = instance.spacing if spacing is None else spacing
    rects = list(p.rects(instance).values())
    for i, (x1, y1, w1, h1) in enumerate(rects):
        for x2, y2, w2, h2 in rects[i + 1 :]:
            apart_x = x1 + w1 + spacing <= x2 + EPS or x2 + w2 + spacing <= x1 + EPS
            apart_y = y1 + h1 + spacing <= y2 + EPS or y2 + h2 + spacing <= y1 + EPS
            if not (apart_x or apart_y):
                return False
    return True


def initial_sequence_pair(instance: PlacementInstance) -> SequencePair:
    """Units in natural order; pairs reversed in the second half so they stack vertically."""
    units = _units(instance)
    pos = list(units)
    macros = [u for u in pos if len(units[u]) == 2]
    reversed_macros = iter(reversed(macros))
    neg = [next(reversed_macros) if len(units[u]) == 2 else u for u in pos]
    return SequencePair(pos=tuple(pos), neg=tuple(neg))


def _macros_stacked(sp: SequencePair, macros: list[str]) -> bool:
    pos = {u: i for i, u in enumerate(sp.pos)}
    neg = {u: i for i, u in enumerate(sp.neg)}
    return all(
        (pos[a] < pos[b]) != (neg[a] < neg[b]) for i, a in enumerate(macros) for b in macros[i + 1 :]
    )


def _swap(seq: tuple[str, ...], a: str, b: str) -> tuple[str, ...]:
    return tuple(b if u == a else a if u == b else u for u in seq)


def neighbour(sp: SequencePair, instance: PlacementInstance, rng: np.random.Generator) -> SequencePair | None:
    """One random move: swap two units in one sequence, swap them in both, or rotate a single block.

    Moves that would let two mirrored pairs sit side by side are redrawn.
    Returns None when no move exists.
    """
    units = _units(instance)
    singles = [u for u in sp.pos if len(units[u]) == 1]
    macros = [u for u in sp.pos if len(units[u]) == 2]
    kinds = ([0, 1] if len(sp.pos) > 1 else []) + ([2] if singles else [])
    if not kinds:
        return None
    for _ in range(32):
        kind = kinds[int(rng.integers(len(kinds)))]
        if kind == 2:
            u = singles[int(rng.integers(len(singles)))]
            return SequencePair(pos=sp.pos, neg=sp.neg, rotated=sp.rotated ^ {u})
        i, j = rng.choice(len(sp.pos), size=2, replace=False)
        a, b = sp.pos[int(i)], sp.pos[int(j)]
        if kind == 1:
            candidate = SequencePair(pos=_swap(sp.pos, a, b), neg=_swap(sp.neg, a, b), rotated=sp.rotated)
        elif rng.random() < 0.5:
            candidate = SequencePair(pos=_swap(sp.pos, a, b), neg=sp.neg, rotated=sp.rotated)
        else:
            candidate = SequencePair(pos=sp.pos, neg=_swap(sp.neg, a, b), rotated=sp.rotated)
        if _macros_stacked(candidate, macros):
            return candidate
    return None


def calibrate_temperature(
    instance: PlacementInstance,
    sp: SequencePair,
    settings: PlacementSettings,
    rng: np.random.Generator,
) -> float:
    """T0 at which the mean uphill move is accepted with ``initial_acceptance``."""
    base = cost(realize(sp, instance), instance, settings).total
    uphill = []
    for _ in range(settings.calibration_moves):
        candidate = neighbour(sp, instance, rng)
        if candidate is None:
            break
        delta = cost(realize(candidate, instance), instance, settings).total - base
        if delta > 0:
            uphill.append(delta)
    if not uphill:
        return 1.0
    return -float(np.mean(uphill)) / math.log(settings.initial_acceptance)


def _anneal_once(instance: PlacementInstance, settings: PlacementSettings, rng: np.random.Generator) -> AnnealResult:
    current = initial_sequence_pair(instance)
    current_cost = cost(realize(current, instance), instance, settings).total
    best, best_cost = current, current_cost
    t0 = settings.initial_temperature
    if t0 is None:
        t0 = calibrate_temperature(instance, current, settings, rng)
    trace: list[float] = []
    current_trace: list[float] = []

    if t0 > 0:
        rounds = max(1, math.ceil(math.log(settings.stop_ratio) / math.log(settings.alpha)))
    else:
        rounds = settings.greedy_rounds
    temperature = t0
    for _ in range(rounds):
        for _ in range(settings.moves_per_temperature):
            candidate = neighbour(current, instance, rng)
            if candidate is None:
                break
            candidate_cost = cost(realize(candidate, instance), instance, settings).total
            delta = candidate_cost - current_cost
            if temperature > 0:
                accept = delta <= 0 or rng.random() < math.exp(-delta / temperature)
            else:
                accept = delta < 0
            if accept:
                current, current_cost = candidate, candidate_cost
                if current_cost < best_cost:
                    best, best_cost = current, current_cost
            trace.append(best_cost)
            current_trace.append(current_cost)
        temperature *= settings.alpha

    placement = snap(best, instance)
    return AnnealResult(
        placement=placement,
        sequence_pair=best,
        cost=cost(placement, instance, settings),
        trace=trace,
        current_trace=current_trace,
        initial_temperature=t0,
    )


def anneal(
    instance: PlacementInstance,
    settings: PlacementSettings | None = None,
    rng: np.random.Generator | None = None,
) -> AnnealResult:
    """Simulated annealing over sequence pairs; the cheapest of ``restarts`` runs wins.

    Each restart draws its own seed from ``rng``. The returned placement has
    every mirrored pair snapped onto one common axis.
    """
    settings = settings or PlacementSettings()
    rng = rng if rng is not None else np.random.default_rng(0)
    seeds = rng.integers(0, 2**32 - 1, size=settings.restarts)
    results = [_anneal_once(instance, settings, np.random.default_rng(int(seed))) for seed in seeds]
    best = min(results, key=lambda r: r.cost.total)
    logger.info(
        f"Placed {len(instance.blocks)} blocks: bbox {best.placement.bbox[0]:.3g} x {best.placement.bbox[1]:.3g} um, "
        f"cost {best.cost.total:.4g}"
    )
    return best


def snap(sp: SequencePair, instance: PlacementInstance) -> Placement:
    """Realize with every mirrored pair centred on one common axis."""
    return realize(sp, instance, align_axes=True)


def write_placement(result: AnnealResult, instance: PlacementInstance, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    artifact = PlacementArtifact(
        instance=instance, placement=result.placement, sequence_pair=result.sequence_pair, cost=result.cost
    )
    path.write_text(artifact.model_dump_json(indent=2), encoding="utf-8")
    return path


def read_placement(path: Path) -> PlacementArtifact:
    """Raises: MissingArtifact"""
    path = Path(path)
    if not path.is_file():
        raise MissingArtifact(f"Placement not found: {path}")
    return PlacementArtifact.model_validate_json(path.read_text(encoding="utf-8"))
