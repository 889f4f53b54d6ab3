import itertools

import numpy as np
import pytest

from analogflow.core.config import PlacementSettings
from analogflow.src.netlist.parser import parse_spice
from analogflow.src.placement.schemas import Block, PlacementInstance, SequencePair
from analogflow.src.placement.service import (
    anneal,
    cost,
    derive_symmetry_pairs,
    hpwl,
    initial_sequence_pair,
    instance_from_netlist,
    neighbour,
    overlap_free,
    pair_axes,
    realize,
    snap,
    symmetry_penalty,
)

from conftest import FIVE_T_AMP

AREA_ONLY = PlacementSettings(w_wirelength=0.0, w_symmetry=0.0, spacing=0.0)


def blocks_instance(sizes: dict[str, tuple[float, float]], spacing: float = 0.0, pairs=(), nets=None):
    blocks = [Block(id=name, width=w, height=h) for name, (w, h) in sizes.items()]
    return PlacementInstance(blocks=blocks, symmetry_pairs=list(pairs), spacing=spacing, nets=nets or {})


def two_pair_instance() -> PlacementInstance:
    return blocks_instance(
        {"A1": (2, 1), "A2": (2, 1), "B1": (4, 1), "B2": (4, 1), "C": (1, 1)},
        spacing=1.0,
        pairs=[("A1", "A2"), ("B1", "B2")],
    )


class TestSymmetryPairs:
    def test_five_transistor(self, five_t_amp):
        assert derive_symmetry_pairs(five_t_amp) == [("M1", "M2"), ("M3", "M4")]

    def test_common_source_has_none(self, common_source):
        assert derive_symmetry_pairs(common_source) == []

    def test_shared_bias_gate_is_not_a_pair(self, two_stage):
        pairs = derive_symmetry_pairs(two_stage)
        assert pairs == [("M1", "M2"), ("M3", "M4")]
        assert all("M5" not in pair and "M7" not in pair for pair in pairs)

    def test_mismatched_sizes(self):
        ir = parse_spice(FIVE_T_AMP.replace("M2 out inn tail GND nfet W=2u", "M2 out inn tail GND nfet W=3u"))
        assert derive_symmetry_pairs(ir) == [("M3", "M4")]


class TestInstance:
    def test_five_transistor_blocks(self, five_t_amp):
        instance = instance_from_netlist(five_t_amp, PlacementSettings(enclosure=0.5), pitch=0.5)
        assert [b.id for b in instance.blocks] == ["M1", "M2", "M3", "M4", "M5"]
        m1 = instance.block("M1")
        assert (m1.width, m1.height) == (3.0, 2.0)
        assert instance.block("M3").size() == (5.0, 2.0)
        assert instance.block("M1").pins["G"] == (0.0, 1.0)
        assert instance.block("M2").pins["G"] == (3.0, 1.0)
        assert sorted(instance.nets["tail"]) == [("M1", "S"), ("M2", "S"), ("M5", "D")]
        assert instance.symmetry_pairs == [("M1", "M2"), ("M3", "M4")]
        assert all(pin != "B" for pins in instance.nets.values() for _, pin in pins)

    def test_footprints_snap_to_pitch(self, five_t_amp):
        instance = instance_from_netlist(five_t_amp, PlacementSettings(enclosure=0.3), pitch=0.5)
        for block in instance.blocks:
            assert block.width / 0.5 == pytest.approx(round(block.width / 0.5))
            assert block.height / 0.5 == pytest.approx(round(block.height / 0.5))

    def test_invalid_pairs_rejected(self):
        with pytest.raises(ValueError):
            blocks_instance({"A": (1, 1), "B": (2, 1)}, pairs=[("A", "B")])
        with pytest.raises(ValueError):
            blocks_instance({"A": (1, 1), "B": (1, 1), "C": (1, 1)}, pairs=[("A", "B"), ("B", "C")])
        with pytest.raises(ValueError):
            Block(id="A", width=1, height=1, pins={"P": (2.0, 0.0)})


class TestRealize:
    def test_horizontal_row(self):
        instance = blocks_instance({"A": (2, 1), "B": (1, 1), "C": (1, 2)})
        p = realize(SequencePair(pos=("A", "B", "C"), neg=("A", "B", "C")), instance)
        assert p.positions == {"A": (0.0, 0.0), "B": (2.0, 0.0), "C": (3.0, 0.0)}
        assert p.bbox == (4.0, 2.0)

    def test_vertical_stack(self):
        instance = blocks_instance({"A": (2, 1), "B": (1, 1), "C": (1, 2)})
        p = realize(SequencePair(pos=("A", "B", "C"), neg=("C", "B", "A")), instance)
        assert p.positions == {"C": (0.0, 0.0), "B": (0.0, 2.0), "A": (0.0, 3.0)}
        assert p.bbox == (2.0, 4.0)

    def test_spacing_and_rotation(self):
        instance = blocks_instance({"A": (2, 1), "B": (1, 3)}, spacing=0.5)
        p = realize(SequencePair(pos=("A", "B"), neg=("A", "B"), rotated=frozenset({"B"})), instance)
        assert p.positions["B"] == (2.5, 0.0)
        assert p.rotated == ["B"]
        assert p.bbox == (5.5, 1.0)

    def test_random_sequence_pairs_are_legal(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            sizes = {f"B{i}": (float(rng.integers(1, 5)), float(rng.integers(1, 5))) for i in range(6)}
            instance = blocks_instance(sizes, spacing=float(rng.choice([0.0, 0.5, 1.0])))
            names = list(sizes)
            sp = SequencePair(
                pos=tuple(rng.permutation(names)),
                neg=tuple(rng.permutation(names)),
                rotated=frozenset(n for n in names if rng.random() < 0.3),
            )
            p = realize(sp, instance)
            assert overlap_free(p, instance)
            rects = p.rects(instance)
            assert p.bbox[0] == pytest.approx(max(x + w for x, _, w, _ in rects.values()))
            assert p.bbox[1] == pytest.approx(max(y + h for _, y, _, h in rects.values()))
            pos = {n: i for i, n in enumerate(sp.pos)}
            neg = {n: i for i, n in enumerate(sp.neg)}
            for a, b in itertools.permutations(names, 2):
                xa, ya, wa, ha = rects[a]
                xb, yb, _, _ = rects[b]
                if pos[a] < pos[b] and neg[a] < neg[b]:
                    assert xa + wa + instance.spacing <= xb + 1e-9
                if pos[a] > pos[b] and neg[a] < neg[b]:
                    assert ya + ha + instance.spacing <= yb + 1e-9

    def test_pair_members_mirror(self):
        instance = two_pair_instance()
        p = realize(initial_sequence_pair(instance), instance)
        assert p.positions["A2"] == (p.positions["A1"][0] + 3.0, p.positions["A1"][1])
        assert p.positions["B2"] == (p.positions["B1"][0] + 5.0, p.positions["B1"][1])
        assert overlap_free(p, instance)


class TestCost:
    def test_two_blocks_with_net(self):
        instance = PlacementInstance(
            blocks=[
                Block(id="A", width=2, height=2, pins={"p": (2.0, 1.0)}),
                Block(id="B", width=2, height=2, pins={"p": (0.0, 1.0)}),
            ],
            nets={"n": [("A", "p"), ("B", "p")]},
            spacing=1.0,
        )
        p = realize(SequencePair(pos=("A", "B"), neg=("A", "B")), instance)
        breakdown = cost(p, instance)
        assert breakdown.area == 10.0
        assert breakdown.wirelength == 1.0
        assert breakdown.symmetry == 0.0
        assert breakdown.total == pytest.approx(10.5)

    def test_rotated_pin_offsets(self):
        block = Block(id="A", width=3, height=1, pins={"p": (3.0, 0.0)})
        assert block.pin_offset("p", rotated=True) == (1.0, 3.0)
        assert block.size(rotated=True) == (1, 3)

    def test_symmetry_recount(self):
        instance = two_pair_instance()
        p = realize(initial_sequence_pair(instance), instance)
        assert pair_axes(p, instance) == {("A1", "A2"): 2.5, ("B1", "B2"): 4.5}
        assert symmetry_penalty(p, instance) == pytest.approx(2.0)
        assert cost(p, instance).symmetry == pytest.approx(2.0)

    def test_snap_aligns_axes(self):
        instance = two_pair_instance()
        p = snap(initial_sequence_pair(instance), instance)
        assert set(pair_axes(p, instance).values()) == {4.5}
        assert symmetry_penalty(p, instance) == 0.0
        assert p.positions["C"][0] == 10.0
        assert overlap_free(p, instance)

    def test_hpwl_single_pin_net(self):
        instance = PlacementInstance(blocks=[Block(id="A", width=1, height=1, pins={"p": (0.0, 0.0)})],
                                     nets={"n": [("A", "p")]})
        p = realize(SequencePair(pos=("A",), neg=("A",)), instance)
        assert hpwl(p, instance, "n") == 0.0


class TestNeighbour:
    def test_pairs_stay_stacked(self):
        instance = two_pair_instance()
        sp = initial_sequence_pair(instance)
        rng = np.random.default_rng(0)
        for _ in range(300):
            sp = neighbour(sp, instance, rng) or sp
            p = snap(sp, instance)
            assert overlap_free(p, instance)
            assert symmetry_penalty(p, instance) == pytest.approx(0.0)
            assert "A1+A2" not in sp.rotated and "B1+B2" not in sp.rotated

    def test_single_block_has_no_swap(self):
        instance = blocks_instance({"A": (1, 2)})
        sp = SequencePair(pos=("A",), neg=("A",))
        moved = neighbour(sp, instance, np.random.default_rng(0))
        assert moved.rotated == frozenset({"A"})


class TestAnneal:
    def test_two_squares(self):
        instance = blocks_instance({"A": (1, 1), "B": (1, 1)})
        result = anneal(instance, AREA_ONLY, np.random.default_rng(0))
        assert result.cost.area == pytest.approx(2.0)

    def test_three_blocks_reach_exhaustive_optimum(self):
        instance = blocks_instance({"A": (1, 2), "B": (1, 2), "C": (1, 1)})
        names = ("A", "B", "C")
        optimum = min(
            realize(SequencePair(pos=pos, neg=neg, rotated=frozenset(rot)), instance).bbox[0]
            * realize(SequencePair(pos=pos, neg=neg, rotated=frozenset(rot)), instance).bbox[1]
            for pos in itertools.permutations(names)
            for neg in itertools.permutations(names)
            for k in range(4)
            for rot in itertools.combinations(names, k)
        )
        assert optimum == pytest.approx(5.0)
        settings = AREA_ONLY.model_copy(update={"alpha": 0.8, "moves_per_temperature": 30})
        hits = sum(
            anneal(instance, settings, np.random.default_rng(seed)).cost.area == pytest.approx(optimum)
            for seed in range(30)
        )
        assert hits >= 28

    def test_best_trace_is_monotone(self):
        instance = two_pair_instance()
        settings = PlacementSettings(spacing=1.0, alpha=0.8, moves_per_temperature=20)
        result = anneal(instance, settings, np.random.default_rng(3))
        assert all(b <= a for a, b in zip(result.trace, result.trace[1:]))
        assert result.initial_temperature > 0
        assert overlap_free(result.placement, instance)
        assert result.cost.symmetry == pytest.approx(0.0)

    def test_zero_temperature_is_greedy(self):
        instance = blocks_instance({f"B{i}": (float(1 + i % 3), float(1 + i % 2)) for i in range(6)}, spacing=0.5)
        settings = PlacementSettings(initial_temperature=0.0, greedy_rounds=5, moves_per_temperature=40, spacing=0.5)
        result = anneal(instance, settings, np.random.default_rng(1))
        assert result.initial_temperature == 0.0
        assert all(b <= a for a, b in zip(result.current_trace, result.current_trace[1:]))
        assert len(result.current_trace) == 200

    def test_seed_determinism(self, five_t_amp):
        instance = instance_from_netlist(five_t_amp)
        settings = PlacementSettings(alpha=0.8, moves_per_temperature=20)
        first = anneal(instance, settings, np.random.default_rng(11))
        second = anneal(instance, settings, np.random.default_rng(11))
        assert first.placement == second.placement
        assert first.trace == second.trace

    def test_five_transistor_layout(self, five_t_amp):
        instance = instance_from_netlist(five_t_amp)
        settings = PlacementSettings(alpha=0.85, moves_per_temperature=40, restarts=2)
        result = anneal(instance, settings, np.random.default_rng(0))
        p = result.placement
        assert overlap_free(p, instance)
        axes = pair_axes(p, instance)
        assert len(set(axes.values())) == 1
        for a, b in instance.symmetry_pairs:
            assert p.positions[a][1] == p.positions[b][1]
