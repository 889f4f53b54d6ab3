"""Two-layer grid router: A* per net, sequential commitment, mirrored symmetric nets."""

import heapq
import math
from collections.abc import Iterable
from itertools import count
from pathlib import Path

import svgwrite

from analogflow.core.config import RoutingSettings
from analogflow.core.exceptions import MissingArtifact, PinOffGrid, Unreachable
from analogflow.core.logging import get_logger
from analogflow.src.netlist.schemas import natural_key
from analogflow.src.placement.schemas import Placement, PlacementInstance
from analogflow.src.placement.service import pair_axes
from analogflow.src.routing.schemas import FREE, Cell, NetPair, Route, RoutingGrid, RoutingReport, Violation

logger = get_logger(__name__)

EPS = 1e-9
LAYER_COLORS = ("red", "blue")


def _edge_index(coord: float, origin: float, pitch: float, mirrored: bool) -> int:
    """Cell along an edge; a pin exactly on a grid line takes the cell towards the pair axis."""
    t = (coord - origin) / pitch
    k = round(t)
    if abs(t - k) < 1e-6:
        return k - 1 if mirrored else k
    return math.floor(t)


def _pin_cell(
    px: float, py: float, rect: tuple[float, float, float, float], grid: RoutingGrid, mirrored: bool
) -> Cell:
    x, y, w, h = rect
    ox, oy = grid.origin
    p = grid.pitch
    if abs(py - (y + h)) < EPS:
        return 0, _edge_index(px, ox, p, mirrored), math.floor((py - oy) / p + EPS)
    if abs(py - y) < EPS:
        return 0, _edge_index(px, ox, p, mirrored), math.ceil((py - oy) / p - EPS) - 1
    if abs(px - x) < EPS:
        return 0, math.ceil((px - ox) / p - EPS) - 1, _edge_index(py, oy, p, False)
    return 0, math.floor((px - ox) / p + EPS), _edge_index(py, oy, p, False)


def build_grid(p: Placement, instance: PlacementInstance, rules: RoutingSettings | None = None) -> RoutingGrid:
    """Lattice over bbox + margin; footprints block layer 0; pins sit in the cell just outside their edge.

    Gate nets of symmetric pairs are marked sensitive.

    Raises:
        PinOffGrid: If a pin cell is outside the lattice, inside a footprint or taken by another net's pin
    """
    rules = rules or RoutingSettings()
    pitch, margin = rules.pitch, rules.margin
    width, height = p.bbox
    nx = max(1, math.ceil((width + 2 * margin) / pitch - EPS))
    ny = max(1, math.ceil((height + 2 * margin) / pitch - EPS))
    grid = RoutingGrid.empty(nx, ny, pitch, (-margin, -margin))
    ox, oy = grid.origin

    rects = p.rects(instance)
    for x, y, w, h in rects.values():
        ix0 = max(0, math.floor((x - ox) / pitch + EPS))
        ix1 = min(nx, math.ceil((x + w - ox) / pitch - EPS))
        iy0 = max(0, math.floor((y - oy) / pitch + EPS))
        iy1 = min(ny, math.ceil((y + h - oy) / pitch - EPS))
        grid.obstacles[0, ix0:ix1, iy0:iy1] = True

    right_members = {b for _, b in instance.symmetry_pairs}
    for net in sorted(instance.nets, key=natural_key):
        for block, pin in instance.nets[net]:
            if block not in rects:
                continue
            px, py = p.pin_position(instance, block, pin)
            cell = _pin_cell(px, py, rects[block], grid, block in right_members)
            if not grid.in_bounds(cell) or grid.obstacles[cell]:
                raise PinOffGrid(f"Pin {block}.{pin} of net {net} projects onto an obstacle or off the lattice")
            owner = grid.owner(cell)
            if owner is not None and owner != net:
                raise PinOffGrid(f"Pin {block}.{pin} of net {net} shares cell {cell} with net {owner}")
            grid.add_pin(net, cell)

    nets_by_pin = {(block, pin): net for net, pins in instance.nets.items() for block, pin in pins}
    for a, b in instance.symmetry_pairs:
        for member in (a, b):
            gate = nets_by_pin.get((member, "G"))
            if gate is not None:
                grid.sensitive.add(gate)
    logger.debug(f"Routing grid {nx}x{ny} at pitch {pitch}, {int(grid.obstacles.sum())} obstacle cells")
    return grid


def _near_other_net(grid: RoutingGrid, cell: Cell, net_index: int, radius: int) -> bool:
    layer, ix, iy = cell
    window = grid.occupancy[layer, max(0, ix - radius) : ix + radius + 1, max(0, iy - radius) : iy + radius + 1]
    return bool(((window != FREE) & (window != net_index)).any())


def is_free(grid: RoutingGrid, cell: Cell, net: str, rules: RoutingSettings) -> bool:
    """Cell usable by ``net``: no footprint, no other net, and outside other nets' keep-out."""
    if not grid.in_bounds(cell) or grid.obstacles[cell]:
        return False
    index = grid.net_names.index(net) if net in grid.net_names else FREE
    owner = int(grid.occupancy[cell])
    if owner != FREE and owner != index:
        return False
    return rules.min_spacing <= 1 or not _near_other_net(grid, cell, index, rules.min_spacing - 1)


def _sensitive_nearby(grid: RoutingGrid, cell: Cell, net: str) -> bool:
    layer, ix, iy = cell
    for c in ((layer, ix, iy), (layer, ix + 1, iy), (layer, ix - 1, iy), (layer, ix, iy + 1), (layer, ix, iy - 1)):
        if grid.in_bounds(c):
            owner = grid.owner(c)
            if owner is not None and owner != net and owner in grid.sensitive:
                return True
    return False


def step_cost(grid: RoutingGrid, rules: RoutingSettings, net: str, a: Cell, b: Cell) -> float:
    """Cost of moving from ``a`` into ``b``; planar steps never cost less than ``base_cost``."""
    if a[0] != b[0]:
        value = rules.via_penalty
    else:
        value = rules.base_cost
        horizontal = a[2] == b[2]
        if horizontal != (b[0] == 0):
            value += rules.wrong_way_penalty
    value += rules.congestion_weight * float(grid.history[b])
    if rules.sensitivity_surcharge and _sensitive_nearby(grid, b, net):
        value += rules.sensitivity_surcharge
    return value


def _is_cell(value) -> bool:
    return isinstance(value, tuple) and len(value) == 3 and all(isinstance(v, int) for v in value)


def astar_route(
    grid: RoutingGrid,
    src: Cell,
    dst: Cell | Iterable[Cell],
    rules: RoutingSettings | None = None,
    net: str = "net",
) -> tuple[list[Cell], float]:
    """Cheapest path from ``src`` to any target cell.

    The heuristic is ``base_cost`` times the Manhattan distance to the targets'
    bounding box, which never overestimates.

    Raises:
        Unreachable: If no target can be reached
    """
    rules = rules or RoutingSettings()
    targets = {tuple(dst)} if _is_cell(dst) else {tuple(t) for t in dst}
    if not targets:
        raise Unreachable(net)
    xs = [t[1] for t in targets]
    ys = [t[2] for t in targets]
    x_lo, x_hi, y_lo, y_hi = min(xs), max(xs), min(ys), max(ys)

    def h(cell: Cell) -> float:
        _, ix, iy = cell
        dx = max(x_lo - ix, 0, ix - x_hi)
        dy = max(y_lo - iy, 0, iy - y_hi)
        return rules.base_cost * (dx + dy)

    src = tuple(src)
    tie = count()
    g = {src: 0.0}
    parent: dict[Cell, Cell] = {}
    frontier = [(h(src), 0.0, next(tie), src)]
    closed: set[Cell] = set()
    while frontier:
        _, cost_so_far, _, cell = heapq.heappop(frontier)
        if cell in closed:
            continue
        if cell in targets:
            path = [cell]
            while path[-1] in parent:
                path.append(parent[path[-1]])
            return path[::-1], cost_so_far
        closed.add(cell)
        for nxt in grid.neighbors(cell):
            if nxt in closed or not (nxt in targets or is_free(grid, nxt, net, rules)):
                continue
            candidate = cost_so_far + step_cost(grid, rules, net, cell, nxt)
            if candidate < g.get(nxt, math.inf):
                g[nxt] = candidate
                parent[nxt] = cell
                heapq.heappush(frontier, (candidate + h(nxt), candidate, next(tie), nxt))
    raise Unreachable(net)


def _summarize(route: Route, pitch: float) -> Route:
    planar = vias = 0
    for segment in route.segments:
        for a, b in zip(segment, segment[1:]):
            if a[0] != b[0]:
                vias += 1
            else:
                planar += 1
    return route.model_copy(update={"length": planar * pitch, "via_count": vias})


def route_net(grid: RoutingGrid, net: str, rules: RoutingSettings | None = None) -> Route:
    """Sequential Steiner approximation: join the pin nearest to the growing tree, one at a time.

    Raises:
        Unreachable: If some pin cannot reach the tree
    """
    rules = rules or RoutingSettings()
    pins = list(grid.pins[net])
    tree = {pins[0]}
    pending = [pin for pin in pins[1:] if pin not in tree]
    segments = []
    total = 0.0
    while pending:
        pending.sort(key=lambda c: (min(abs(c[1] - t[1]) + abs(c[2] - t[2]) for t in tree), c))
        pin = pending.pop(0)
        if pin in tree:
            continue
        path, path_cost = astar_route(grid, pin, tree, rules, net)
        segments.append(path)
        tree.update(path)
        total += path_cost
    return _summarize(Route(net=net, segments=segments, cost=total), grid.pitch)


def commit(grid: RoutingGrid, route: Route) -> None:
    """Claim the route's cells and raise congestion around them."""
    index = grid.net_index(route.net)
    for cell in route.path:
        grid.occupancy[cell] = index
    for cell in route.path:
        for nb in grid.neighbors(cell):
            if nb[0] == cell[0] and grid.occupancy[nb] == FREE:
                grid.history[nb] += 1.0


def mirror_cell(cell: Cell, axis_index: int) -> Cell:
    layer, ix, iy = cell
    return layer, axis_index - ix - 1, iy


def _axis_index(grid: RoutingGrid, axis: float) -> int | None:
    value = 2 * (axis - grid.origin[0]) / grid.pitch
    k = round(value)
    return k if abs(value - k) < 1e-6 else None


def mirror_route(grid: RoutingGrid, route: Route, net: str, axis: float, rules: RoutingSettings) -> Route | None:
    """Mirror ``route`` about the vertical line x = axis for ``net``; None when illegal."""
    axis_index = _axis_index(grid, axis)
    if axis_index is None or net not in grid.pins:
        return None
    segments = [[mirror_cell(c, axis_index) for c in segment] for segment in route.segments]
    mirrored_pins = {mirror_cell(c, axis_index) for c in grid.pins[route.net]}
    if mirrored_pins != set(grid.pins[net]):
        return None
    cells = {c for segment in segments for c in segment}
    if not all(is_free(grid, c, net, rules) for c in cells):
        return None
    total = sum(step_cost(grid, rules, net, a, b) for segment in segments for a, b in zip(segment, segment[1:]))
    return _summarize(Route(net=net, segments=segments, cost=total, mirrored_from=route.net), grid.pitch)


def _net_order_key(grid: RoutingGrid, net: str):
    pins = grid.pins[net]
    xs = [c[1] for c in pins]
    ys = [c[2] for c in pins]
    area = (max(xs) - min(xs) + 1) * (max(ys) - min(ys) + 1)
    return len(pins), area, natural_key(net)


def route_all(
    grid: RoutingGrid,
    rules: RoutingSettings | None = None,
    pairs: list[NetPair] | None = None,
) -> RoutingReport:
    """Route every multi-pin net in (pin count, bbox area) order, committing each route.

    The second net of a pair is first tried as the mirror of the first; when
    the mirror is illegal it is routed on its own and reported asymmetric.
    """
    rules = rules or RoutingSettings()
    nets = [net for net, pins in grid.pins.items() if len(pins) >= 2]
    order = sorted(nets, key=lambda n: _net_order_key(grid, n))
    partner = {}
    for pair in pairs or []:
        partner.setdefault(pair.a, (pair.b, pair.axis))
        partner.setdefault(pair.b, (pair.a, pair.axis))

    report = RoutingReport()
    done: set[str] = set()
    for net in order:
        if net in done:
            continue
        done.add(net)
        try:
            route = route_net(grid, net, rules)
        except Unreachable:
            report.unrouted.append(net)
            continue
        commit(grid, route)
        report.routes.append(route)

        other, axis = partner.get(net, (None, 0.0))
        if other is None or other in done or other not in nets:
            continue
        done.add(other)
        mirrored = mirror_route(grid, route, other, axis, rules)
        if mirrored is None:
            logger.warning(f"Net {other} cannot mirror {net}; routing it independently")
            report.asymmetric.append(other)
            try:
                mirrored = route_net(grid, other, rules)
            except Unreachable:
                report.unrouted.append(other)
                continue
        commit(grid, mirrored)
        report.routes.append(mirrored)

    report.violations = drc_check(report.routes, grid, rules)
    logger.info(
        f"Routed {len(report.routes)} nets, {len(report.unrouted)} unrouted, {len(report.violations)} DRC violations"
    )
    return report


def net_pairs(p: Placement, instance: PlacementInstance) -> list[NetPair]:
    """Distinct nets on the same pin of both members of each symmetric pair."""
    axes = pair_axes(p, instance)
    nets_by_pin = {(block, pin): net for net, pins in instance.nets.items() for block, pin in pins}
    pairs = []
    seen = set()
    for (a, b), axis in axes.items():
        for pin in instance.block(a).pins:
            na, nb = nets_by_pin.get((a, pin)), nets_by_pin.get((b, pin))
            if na is None or nb is None or na == nb or frozenset((na, nb)) in seen:
                continue
            seen.add(frozenset((na, nb)))
            pairs.append(NetPair(a=na, b=nb, axis=axis))
    return pairs


def drc_check(routes: list[Route], grid: RoutingGrid, rules: RoutingSettings | None = None) -> list[Violation]:
    """Spacing between different nets on a layer, via landings and off-grid steps."""
    rules = rules or RoutingSettings()
    violations: list[Violation] = []
    owners: dict[Cell, list[str]] = {}
    for route in routes:
        for cell in route.path:
            owners.setdefault(cell, []).append(route.net)
        for segment in route.segments:
            for cell in segment:
                if not grid.in_bounds(cell):
                    violations.append(Violation(kind="off_grid", nets=(route.net,), cells=(cell,)))
                elif cell[0] == 0 and grid.obstacles[cell]:
                    violations.append(Violation(kind="obstacle", nets=(route.net,), cells=(cell,)))
            for a, b in zip(segment, segment[1:]):
                steps = abs(a[0] - b[0]) + abs(a[1] - b[1]) + abs(a[2] - b[2])
                if steps != 1:
                    violations.append(Violation(kind="off_grid", nets=(route.net,), cells=(a, b)))
                elif a[0] != b[0] and grid.in_bounds(a) and grid.obstacles[0, a[1], a[2]]:
                    violations.append(Violation(kind="via", nets=(route.net,), cells=(a, b)))

    radius = rules.min_spacing - 1
    for cell, nets in sorted(owners.items()):
        layer, ix, iy = cell
        for dx in range(-radius, radius + 1):
            for dy in range(-radius, radius + 1):
                other = (layer, ix + dx, iy + dy)
                for net in nets:
                    for other_net in owners.get(other, ()):
                        if other_net == net or (other, other_net) <= (cell, net):
                            continue
                        violations.append(Violation(kind="spacing", nets=(net, other_net), cells=(cell, other)))
    return violations


def render_svg(
    p: Placement,
    instance: PlacementInstance,
    grid: RoutingGrid,
    routes: list[Route],
    path: Path,
    scale: float = 20.0,
) -> Path:
    """Blocks as rectangles, layer-0 wires red, layer-1 wires blue, vias as squares, labels."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ox, oy = grid.origin
    width, height = grid.nx * grid.pitch, grid.ny * grid.pitch

    def xy(x: float, y: float) -> tuple[float, float]:
        # SVG y grows downward
        return (x - ox) * scale, (height - (y - oy)) * scale

    dwg = svgwrite.Drawing(str(path), size=(width * scale, height * scale), profile="tiny")
    dwg.add(dwg.rect(insert=(0, 0), size=(width * scale, height * scale), fill="white"))
    for block_id, (x, y, w, h) in p.rects(instance).items():
        left, top = xy(x, y + h)
        dwg.add(dwg.rect(insert=(left, top), size=(w * scale, h * scale), stroke="black", fill="silver"))
        dwg.add(dwg.text(block_id, insert=(left + 2, top + 12), font_size=10))
    for route in routes:
        for segment in route.segments:
            for a, b in zip(segment, segment[1:]):
                if a[0] == b[0]:
                    dwg.add(
                        dwg.line(
                            start=xy(*grid.center(a)),
                            end=xy(*grid.center(b)),
                            stroke=LAYER_COLORS[a[0]],
                            stroke_width=scale * grid.pitch * 0.4,
                        )
                    )
                else:
                    cx, cy = xy(*grid.center(a))
                    side = scale * grid.pitch * 0.6
                    dwg.add(dwg.rect(insert=(cx - side / 2, cy - side / 2), size=(side, side), fill="black"))
        if route.segments and route.segments[0]:
            dwg.add(dwg.text(route.net, insert=xy(*grid.center(route.segments[0][0])), font_size=9, fill="green"))
    dwg.save()
    logger.info(f"Wrote layout SVG: {path}")
    return path


def write_routes(report: RoutingReport, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
    return path


def read_routes(path: Path) -> RoutingReport:
    """Raises: MissingArtifact"""
    path = Path(path)
    if not path.is_file():
        raise MissingArtifact(f"Routes not found: {path}")
    return RoutingReport.model_validate_json(path.read_text(encoding="utf-8"))
