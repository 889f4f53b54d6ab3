import heapq
import itertools
import math

import numpy as np
import pytest

from analogflow.core.config import PlacementSettings, RoutingSettings
from analogflow.core.exceptions import PinOffGrid, Unreachable
from analogflow.src.placement.schemas import Block, PlacementInstance, SequencePair
from analogflow.src.placement.service import anneal, instance_from_netlist, realize
from analogflow.src.routing.schemas import NetPair, Route, RoutingGrid
from analogflow.src.routing.service import (
    astar_route,
    build_grid,
    commit,
    drc_check,
    is_free,
    mirror_cell,
    net_pairs,
    render_svg,
    route_all,
    route_net,
    step_cost,
)

PLAIN = RoutingSettings(
    pitch=1.0, margin=1.0, wrong_way_penalty=0.0, via_penalty=3.0, congestion_weight=0.0, sensitivity_surcharge=0.0
)


def single_block(margin: float = 1.0):
    instance = PlacementInstance(
        blocks=[Block(id="A", width=2, height=2, pins={"top": (1.0, 2.0), "bottom": (1.0, 0.0), "left": (0.0, 1.0)})],
        nets={"t": [("A", "top")], "b": [("A", "bottom")], "l": [("A", "left")]},
    )
    p = realize(SequencePair(pos=("A",), neg=("A",)), instance)
    return p, instance, RoutingSettings(pitch=1.0, margin=margin)


def grid_with_pins(nx: int, ny: int, pins: dict[str, list[tuple[int, int]]]) -> RoutingGrid:
    grid = RoutingGrid.empty(nx, ny)
    for net, cells in pins.items():
        for ix, iy in cells:
            grid.add_pin(net, (0, ix, iy))
    return grid


def dijkstra_cost(grid: RoutingGrid, src, dst, rules: RoutingSettings, net: str) -> float:
    dist = {src: 0.0}
    heap = [(0.0, src)]
    done = set()
    while heap:
        d, cell = heapq.heappop(heap)
        if cell in done:
            continue
        if cell == dst:
            return d
        done.add(cell)
        for nxt in grid.neighbors(cell):
            if nxt != dst and not is_free(grid, nxt, net, rules):
                continue
            candidate = d + step_cost(grid, rules, net, cell, nxt)
            if candidate < dist.get(nxt, math.inf):
                dist[nxt] = candidate
                heapq.heappush(heap, (candidate, nxt))
    return math.inf


class TestBuildGrid:
    def test_empty_grid(self):
        grid = RoutingGrid.empty(4, 3)
        assert grid.obstacles.shape == (2, 4, 3)
        assert not grid.obstacles.any()
        assert sorted(grid.neighbors((0, 0, 0))) == [(0, 0, 1), (0, 1, 0), (1, 0, 0)]

    def test_block_obstacles(self):
        p, instance, rules = single_block()
        grid = build_grid(p, instance, rules)
        assert (grid.nx, grid.ny) == (4, 4)
        assert grid.origin == (-1.0, -1.0)
        assert int(grid.obstacles[0].sum()) == 4
        assert grid.obstacles[0, 1:3, 1:3].all()
        assert not grid.obstacles[1].any()

    def test_pins_sit_next_to_their_edge(self):
        p, instance, rules = single_block()
        grid = build_grid(p, instance, rules)
        assert grid.pins == {"b": [(0, 2, 0)], "l": [(0, 0, 2)], "t": [(0, 2, 3)]}
        for net, pins in instance.nets.items():
            px, py = p.pin_position(instance, *pins[0])
            cx, cy = grid.center(grid.pins[net][0])
            assert math.hypot(cx - px, cy - py) <= rules.pitch
            assert not grid.obstacles[grid.pins[net][0]]

    def test_pin_outside_lattice(self):
        p, instance, rules = single_block(margin=0.0)
        with pytest.raises(PinOffGrid):
            build_grid(p, instance, rules)

    def test_pair_gates_are_sensitive(self, five_t_amp):
        instance = instance_from_netlist(five_t_amp)
        result = anneal(instance, PlacementSettings(alpha=0.8, moves_per_temperature=10), np.random.default_rng(0))
        grid = build_grid(result.placement, instance)
        assert {"inp", "inn", "x"} <= grid.sensitive
        assert "tail" not in grid.sensitive


class TestAstar:
    def test_open_grid_manhattan(self):
        grid = RoutingGrid.empty(5, 5)
        path, cost = astar_route(grid, (0, 0, 0), (0, 4, 4), PLAIN)
        assert cost == pytest.approx(8.0)
        assert len(path) == 9
        assert path[0] == (0, 0, 0) and path[-1] == (0, 4, 4)

    def test_preferred_directions(self):
        grid = RoutingGrid.empty(5, 5)
        rules = PLAIN.model_copy(update={"wrong_way_penalty": 1.0})
        _, cost = astar_route(grid, (0, 0, 0), (0, 4, 4), rules)
        assert cost == pytest.approx(12.0)
        _, cost = astar_route(grid, (0, 0, 0), (0, 4, 0), rules)
        assert cost == pytest.approx(4.0)

    def test_wall_with_gap(self):
        grid = RoutingGrid.empty(7, 5)
        grid.obstacles[:, 3, :4] = True
        path, cost = astar_route(grid, (0, 0, 2), (0, 6, 2), PLAIN)
        assert cost == pytest.approx(10.0)
        assert (0, 3, 4) in path

    def test_unreachable(self):
        grid = RoutingGrid.empty(7, 5)
        grid.obstacles[:, 3, :] = True
        with pytest.raises(Unreachable):
            astar_route(grid, (0, 0, 2), (0, 6, 2), PLAIN)

    def test_matches_dijkstra(self):
        rules = RoutingSettings(pitch=1.0, wrong_way_penalty=1.0, via_penalty=3.0, congestion_weight=0.5)
        rng = np.random.default_rng(12)
        for _ in range(40):
            grid = RoutingGrid.empty(16, 16)
            grid.obstacles[:] = rng.random(grid.obstacles.shape) < 0.25
            grid.history[:] = rng.integers(0, 3, size=grid.history.shape)
            src = (0, int(rng.integers(16)), int(rng.integers(16)))
            dst = (int(rng.integers(2)), int(rng.integers(16)), int(rng.integers(16)))
            grid.obstacles[src] = grid.obstacles[dst] = False
            expected = dijkstra_cost(grid, src, dst, rules, "n")
            if math.isinf(expected):
                with pytest.raises(Unreachable):
                    astar_route(grid, src, dst, rules, "n")
                continue
            path, cost = astar_route(grid, src, dst, rules, "n")
            assert cost == pytest.approx(expected)
            assert path[0] == src and path[-1] == dst
            recount = sum(step_cost(grid, rules, "n", a, b) for a, b in zip(path, path[1:]))
            assert recount == pytest.approx(cost)
            for a, b in zip(path, path[1:]):
                assert sum(abs(u - v) for u, v in zip(a, b)) == 1


class TestRouteAll:
    def test_disjoint_nets(self):
        grid = grid_with_pins(10, 10, {"a": [(1, 1), (8, 1)], "b": [(1, 8), (8, 8)]})
        report = route_all(grid, PLAIN)
        assert report.clean
        assert {r.net: r.length for r in report.routes} == {"a": 7.0, "b": 7.0}
        assert all(r.via_count == 0 for r in report.routes)

    def test_multi_pin_tree(self):
        grid = grid_with_pins(10, 10, {"a": [(1, 1), (8, 1), (4, 6)]})
        route = route_net(grid, "a", PLAIN)
        assert len(route.segments) == 2
        assert set(grid.pins["a"]) <= set(route.path)

    def test_mirrored_partner(self):
        grid = grid_with_pins(10, 6, {"a": [(1, 1), (3, 4)], "b": [(8, 1), (6, 4)]})
        report = route_all(grid, PLAIN, [NetPair(a="a", b="b", axis=5.0)])
        routes = {r.net: r for r in report.routes}
        assert report.asymmetric == []
        assert routes["b"].mirrored_from == "a"
        assert [mirror_cell(c, 10) for c in routes["a"].path] == routes["b"].path
        assert routes["a"].length == routes["b"].length

    def test_unmirrorable_partner_is_routed_alone(self):
        grid = grid_with_pins(10, 6, {"a": [(1, 1), (3, 4)], "b": [(8, 1), (5, 4)]})
        report = route_all(grid, PLAIN, [NetPair(a="a", b="b", axis=5.0)])
        assert report.asymmetric == ["b"]
        assert {r.net for r in report.routes} == {"a", "b"}
        assert report.unrouted == []

    def test_short_nets_first_avoids_blocking(self):
        pins = {"A": [(0, 1), (5, 1)], "B": [(2, 0), (2, 2)], "C": [(4, 0), (4, 2)]}
        rules = PLAIN.model_copy(update={"wrong_way_penalty": 1.0})

        greedy = grid_with_pins(6, 4, pins)
        greedy.obstacles[1] = True
        commit(greedy, route_net(greedy, "A", rules))
        with pytest.raises(Unreachable):
            route_net(greedy, "B", rules)

        grid = grid_with_pins(6, 4, pins)
        grid.obstacles[1] = True
        report = route_all(grid, rules)
        assert [r.net for r in report.routes] == ["B", "C", "A"]
        assert report.clean
        assert any(c[2] == 3 for c in next(r for r in report.routes if r.net == "A").path)

    def test_single_pin_nets_are_skipped(self):
        grid = grid_with_pins(5, 5, {"a": [(1, 1)], "b": [(0, 0), (4, 4)]})
        report = route_all(grid, PLAIN)
        assert [r.net for r in report.routes] == ["b"]


class TestDrc:
    def test_single_route_is_clean(self):
        grid = RoutingGrid.empty(5, 5)
        route = Route(net="a", segments=[[(0, 0, 0), (0, 1, 0), (1, 1, 0), (1, 1, 1)]])
        assert drc_check([route], grid, PLAIN) == []

    def test_adjacent_nets(self):
        grid = RoutingGrid.empty(5, 5)
        routes = [Route(net="a", segments=[[(0, 1, 1)]]), Route(net="b", segments=[[(0, 1, 2)]])]
        assert drc_check(routes, grid, RoutingSettings(min_spacing=1)) == []
        violations = drc_check(routes, grid, RoutingSettings(min_spacing=2))
        assert len(violations) == 1
        assert violations[0].kind == "spacing"
        assert set(violations[0].nets) == {"a", "b"}

    def test_other_layer_does_not_count(self):
        grid = RoutingGrid.empty(5, 5)
        routes = [Route(net="a", segments=[[(0, 1, 1)]]), Route(net="b", segments=[[(1, 1, 2)]])]
        assert drc_check(routes, grid, RoutingSettings(min_spacing=2)) == []

    def test_spacing_matches_pairwise_count(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            grid = RoutingGrid.empty(8, 8)
            routes = []
            for n in range(4):
                cells = {(int(rng.integers(2)), int(rng.integers(8)), int(rng.integers(8))) for _ in range(5)}
                routes.append(Route(net=f"n{n}", segments=[[c] for c in sorted(cells)]))
            spacing = int(rng.integers(1, 4))
            items = [(c, r.net) for r in routes for c in r.path]
            expected = sum(
                1
                for (c1, n1), (c2, n2) in itertools.combinations(items, 2)
                if n1 != n2 and c1[0] == c2[0] and max(abs(c1[1] - c2[1]), abs(c1[2] - c2[2])) <= spacing - 1
            )
            found = [v for v in drc_check(routes, grid, RoutingSettings(min_spacing=spacing)) if v.kind == "spacing"]
            assert len(found) == expected

    def test_geometry_violations(self):
        grid = RoutingGrid.empty(5, 5)
        grid.obstacles[0, 2, 2] = True

        def kinds(route):
            return {v.kind for v in drc_check([route], grid, PLAIN)}

        assert kinds(Route(net="a", segments=[[(0, 0, 0), (0, 2, 0)]])) == {"off_grid"}
        assert kinds(Route(net="a", segments=[[(0, 4, 4), (0, 5, 4)]])) == {"off_grid"}
        assert kinds(Route(net="a", segments=[[(1, 2, 1), (1, 2, 2), (1, 2, 3)]])) == set()
        assert kinds(Route(net="a", segments=[[(0, 2, 2), (1, 2, 2)]])) == {"obstacle", "via"}


class TestLayout:
    def test_five_transistor_routes_and_renders(self, five_t_amp, tmp_path):
        instance = instance_from_netlist(five_t_amp)
        result = anneal(instance, PlacementSettings(alpha=0.85, moves_per_temperature=30), np.random.default_rng(2))
        grid = build_grid(result.placement, instance)
        pairs = net_pairs(result.placement, instance)
        assert any({pair.a, pair.b} == {"x", "out"} for pair in pairs)
        report = route_all(grid, RoutingSettings(), pairs)
        assert report.violations == []
        assert report.unrouted == []
        assert {r.net for r in report.routes} >= {"tail", "x", "out"}

        svg = render_svg(result.placement, instance, grid, report.routes, tmp_path / "layout.svg")
        text = svg.read_text()
        assert text.startswith("<?xml") and "<svg" in text
        assert ">M1<" in text and ">tail<" in text
