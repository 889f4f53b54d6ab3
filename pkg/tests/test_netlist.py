from collections import Counter
from itertools import permutations

import numpy as np
import pytest

from analogflow.core.exceptions import SpiceSyntaxError, UnsupportedCard
from analogflow.src.netlist.canonical import canonical_hash, canonicalize, rail_fingerprint, rail_labels
from analogflow.src.netlist.parser import parse_spice, parse_value, serialize
from analogflow.src.netlist.schemas import NON_POLAR, Device, DeviceKind, NetlistIR, RailRole
from analogflow.src.netlist.service import check_structure, recovery_score

from conftest import TWO_STAGE, make_random_netlist, rename_netlist


class TestParse:
    def test_single_mos(self):
        ir = parse_spice("M1 out in 0 0 nfet W=1u L=0.15u\n.end")
        assert len(ir.devices) == 1
        device = ir.devices[0]
        assert device.kind == DeviceKind.NMOS
        assert set(ir.nets) == {"out", "in", "GND"}
        assert device.params["W"] == pytest.approx(1e-6)
        assert device.params["L"] == pytest.approx(0.15e-6)

    def test_resistor_suffix(self):
        ir = parse_spice("R1 a b 10k\n.end")
        assert ir.devices[0].kind == DeviceKind.R
        assert ir.devices[0].params["VALUE"] == pytest.approx(10_000)

    def test_mos_arity(self):
        with pytest.raises(SpiceSyntaxError) as excinfo:
            parse_spice("M1 d g\n.end")
        assert excinfo.value.line == 1

    @pytest.mark.parametrize(
        "token, value",
        [
            ("1M", 1e-3), ("1meg", 1e6), ("2.2MEG", 2.2e6), ("3p", 3e-12),
            ("1uF", 1e-6), ("10kohm", 1e4), ("1.8", 1.8), ("1e-06", 1e-6),
        ],
    )
    def test_suffix_table(self, token, value):
        assert parse_value(token) == pytest.approx(value)

    def test_unknown_element_rejected(self):
        with pytest.raises(UnsupportedCard):
            parse_spice("X1 a b opamp\n.end")

    def test_param_card_rejected(self):
        with pytest.raises(UnsupportedCard):
            parse_spice(".param w=1u\nR1 a b 1k\n.end")

    def test_control_block_skipped(self):
        text = "R1 a 0 1k\n.control\nrun\nprint v(a)\n.endc\nC1 a 0 1p\n.end"
        ir = parse_spice(text)
        assert [d.id for d in ir.devices] == ["C1", "R1"]

    def test_comments_and_continuations(self):
        text = "* title comment\nM1 out in 0 0 nfet ; trailing\n+ W=2u\n+ L=1u\n.op\n.end\nR9 ignored after end 1"
        ir = parse_spice(text)
        assert ir.devices[0].params == {"W": pytest.approx(2e-6), "L": pytest.approx(1e-6)}

    def test_model_card_decides_polarity(self):
        ir = parse_spice("M1 out in vdd vdd mydev W=1u L=1u\n.model mydev pmos (level=1 vto=-0.5)\n.end")
        assert ir.devices[0].kind == DeviceKind.PMOS
        assert ir.models["mydev"].params["VTO"] == pytest.approx(-0.5)

    def test_unknown_polarity(self):
        with pytest.raises(SpiceSyntaxError):
            parse_spice("M1 a b c d mystery\n.end")

    def test_sources(self):
        ir = parse_spice("V1 in 0 DC 0.9 AC 1\nI1 vdd x 10u\nV2 x 0 PULSE(0 1 1n)\n.end")
        assert ir.device("V1").params == {"VALUE": 0.9, "AC": 1.0}
        assert ir.device("I1").params["VALUE"] == pytest.approx(10e-6)
        assert ir.device("V2").params == {"VALUE": 0.0}

    def test_rails_marked(self, five_t_amp):
        assert five_t_amp.rails["vdd"] == RailRole.VDD
        assert five_t_amp.rails["GND"] == RailRole.GND
        assert five_t_amp.rails["inp"] == RailRole.INPUT
        assert five_t_amp.rails["out"] == RailRole.OUTPUT
        assert "tail" not in five_t_amp.rails

    def test_subcircuit_kept(self):
        text = ".subckt buf a y\nR1 a y 1k\n.ends buf\nR1 in out 2k\n.end"
        ir = parse_spice(text)
        assert ir.subcircuits[0].name == "buf"
        assert parse_spice(serialize(ir)) == ir

    def test_negative_width_rejected(self):
        with pytest.raises(SpiceSyntaxError):
            parse_spice("M1 d g s b nfet W=-1u L=1u\n.end")


class TestSerialize:
    def test_resistor(self):
        assert serialize(parse_spice("R1 a b 10k\n.end")) == "R1 a b 10000\n.end"

    def test_empty(self):
        assert serialize(NetlistIR()) == ".end"

    def test_fixture_fixed_point(self):
        once = serialize(parse_spice(TWO_STAGE))
        assert serialize(parse_spice(once)) == once

    def test_round_trip_random(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            ir = make_random_netlist(rng, int(rng.integers(1, 10)))
            assert parse_spice(serialize(ir)) == ir

    def test_source_params_kept(self):
        ir = parse_spice("I1 vdd x DC 10u m=2\nV1 in 0 0.9 AC 1 rser=50\n.end")
        assert ir.device("I1").params == {"VALUE": pytest.approx(10e-6), "M": 2.0}
        assert ir.device("V1").params == {"VALUE": 0.9, "AC": 1.0, "RSER": 50.0}
        assert "V1 in 0 DC 0.9 AC 1 RSER=50" in serialize(ir)
        assert parse_spice(serialize(ir)) == ir

    def test_devices_in_id_order(self):
        text = serialize(parse_spice("R10 a b 1\nR2 a b 2\nR1 a b 3\n.end"))
        assert [line.split()[0] for line in text.splitlines()[:-1]] == ["R1", "R2", "R10"]


def _lines(ir: NetlistIR, names: dict[str, str]) -> Counter:
    result = Counter()
    for d in ir.devices:
        terms = [(role if d.kind not in NON_POLAR else "T", names[net]) for role, net in d.ports]
        if d.kind in NON_POLAR:
            terms.sort()
        result[(d.kind, tuple(terms))] += 1
    return result


def brute_force_isomorphic(a: NetlistIR, b: NetlistIR) -> bool:
    """Try every bijection between internal nets; rails map by label."""
    labels_a, labels_b = rail_labels(a), rail_labels(b)
    if sorted(labels_a.values()) != sorted(labels_b.values()):
        return False
    free_a = [n for n in a.nets if n not in labels_a]
    free_b = [n for n in b.nets if n not in labels_b]
    if len(free_a) != len(free_b) or len(a.devices) != len(b.devices):
        return False
    target = _lines(b, {**{n: n for n in free_b}, **labels_b})
    for perm in permutations(free_b):
        names = {**dict(zip(free_a, perm)), **labels_a}
        if _lines(a, names) == target:
            return True
    return False


class TestCanonical:
    def test_renaming_invariance(self):
        ir = parse_spice("M1 n1 in n2 GND nfet\nR1 vdd n1 1k\nR2 n2 0 100\n.end")
        renamed = parse_spice("M1 x in y GND nfet\nR1 vdd x 1k\nR2 y 0 100\n.end")
        assert canonicalize(ir) == canonicalize(renamed)

    def test_kind_flip_detected(self):
        a = parse_spice("M1 out in 0 0 nfet\nR1 vdd out 1k\n.end")
        b = parse_spice("M1 out in 0 0 pfet\nR1 vdd out 1k\n.end")
        assert canonicalize(a) != canonicalize(b)

    def test_drain_source_distinct(self):
        a = parse_spice("M1 x in y 0 nfet\nR1 vdd x 1k\nR2 y 0 1k\nR3 x 0 5\n.end")
        b = parse_spice("M1 y in x 0 nfet\nR1 vdd x 1k\nR2 y 0 1k\nR3 x 0 5\n.end")
        assert canonicalize(a) != canonicalize(b)

    def test_resistor_terminals_symmetric(self):
        a = parse_spice("R1 a b 1k\nR2 b 0 1k\nR3 a vdd 1\n.end")
        b = parse_spice("R1 b a 1k\nR2 0 b 1k\nR3 vdd a 1\n.end")
        assert canonicalize(a) == canonicalize(b)

    def test_rails_are_fixed_points(self):
        inverter = parse_spice("M1 out in vdd vdd pfet\nM2 out in 0 0 nfet\n.end")
        swapped = parse_spice("M1 in out vdd vdd pfet\nM2 in out 0 0 nfet\n.end")
        assert canonicalize(inverter) != canonicalize(swapped)

    def test_rail_fingerprint(self):
        a = parse_spice("M1 out in 0 0 nfet\nR1 vdd out 1k\n.end")
        b = parse_spice("M1 out in 0 0 nfet\nR1 out vdd 1k\n.end")
        assert rail_fingerprint(a, "M1") == ("NMOS", "OUTPUT", "INPUT", "GND", "GND")
        assert rail_fingerprint(a, "R1") == rail_fingerprint(b, "R1") == ("R", "OUTPUT", "VDD")
        internal = parse_spice("M1 x in 0 0 nfet\nR1 vdd x 1k\n.end")
        assert rail_fingerprint(internal, "M1")[1] == ""

    def test_hash_is_stable(self, five_t_amp):
        assert canonical_hash(five_t_amp) == canonical_hash(parse_spice(serialize(five_t_amp)))
        assert len(canonical_hash(five_t_amp)) == 64

    def test_congruence_over_random_renamings(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            ir = make_random_netlist(rng, int(rng.integers(1, 9)))
            clones = [rename_netlist(ir, rng) for _ in range(3)]
            forms = {canonicalize(x).certificate for x in [ir, *clones]}
            assert len(forms) == 1

    def test_agrees_with_exhaustive_isomorphism(self):
        rng = np.random.default_rng(2024)
        originals = [make_random_netlist(rng, int(rng.integers(1, 7))) for _ in range(50)]
        corpus = originals + [rename_netlist(ir, rng) for ir in originals]
        forms = [canonicalize(ir) for ir in corpus]
        disagreements = 0
        for i in range(len(corpus)):
            for j in range(i + 1, len(corpus)):
                if (forms[i] == forms[j]) != brute_force_isomorphic(corpus[i], corpus[j]):
                    disagreements += 1
        assert disagreements == 0


def _corrupt(ir: NetlistIR, k: int, rng: np.random.Generator) -> NetlistIR:
    """Move k distinct ports to another existing net, never emptying a net."""
    ports = {d.id: list(d.ports) for d in ir.devices}
    moved: set[tuple[str, int]] = set()
    while len(moved) < k:
        degree = Counter(net for plist in ports.values() for _, net in plist)
        candidates = [
            (dev, i)
            for dev, plist in ports.items()
            for i, (_, net) in enumerate(plist)
            if (dev, i) not in moved and degree[net] >= 3
        ]
        dev, i = candidates[rng.integers(len(candidates))]
        role, net = ports[dev][i]
        others = [n for n in ir.nets if n != net]
        ports[dev][i] = (role, others[rng.integers(len(others))])
        moved.add((dev, i))
    devices = [Device(id=d.id, kind=d.kind, ports=tuple(ports[d.id]), params=d.params) for d in ir.devices]
    return NetlistIR.build(devices)


class TestRecoveryScore:
    def test_identity(self, five_t_amp):
        report = recovery_score(five_t_amp, five_t_amp)
        assert report.exact_match
        assert report.component_accuracy == 1.0
        assert report.edge_accuracy == 1.0

    def test_renamed_prediction_matches(self, two_stage):
        renamed = rename_netlist(two_stage, np.random.default_rng(0))
        assert recovery_score(renamed, two_stage).exact_match

    def test_one_mis_kinded_device(self):
        truth = parse_spice("M1 x inp 0 0 nfet\nM2 out x vdd vdd pfet\nR1 vdd x 1k\nC1 out 0 1p\nR2 out 0 10k\n.end")
        pred = parse_spice("M1 x inp 0 0 nfet\nM2 out x vdd vdd nfet\nR1 vdd x 1k\nC1 out 0 1p\nR2 out 0 10k\n.end")
        report = recovery_score(pred, truth)
        assert not report.exact_match
        assert report.component_accuracy == pytest.approx(0.8)
        assert report.edge_accuracy == pytest.approx(1.0)
        assert any("M2" in line for line in report.mismatches)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_edge_corruption_recount(self, two_stage, k):
        rng = np.random.default_rng(100 + k)
        pred = _corrupt(two_stage, k, rng)
        total_edges = sum(len(d.ports) for d in two_stage.devices)
        report = recovery_score(pred, two_stage)
        assert not report.exact_match
        assert report.edge_accuracy == pytest.approx(1 - k / total_edges)
        assert report.component_accuracy == 1.0

    def test_random_self_scores(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            ir = make_random_netlist(rng, int(rng.integers(1, 8)))
            assert recovery_score(ir, ir).exact_match


class TestStructure:
    def test_five_t_is_valid(self, five_t_amp):
        assert check_structure(five_t_amp) == []

    def test_missing_supply(self):
        problems = check_structure(parse_spice("R1 a 0 1k\nR2 a 0 1k\n.end"))
        assert "no VDD rail" in problems

    def test_floating_internal_net(self):
        problems = check_structure(parse_spice("R1 vdd x 1k\nR2 vdd 0 1k\n.end"))
        assert "net x has a single connection" in problems

    def test_ids_must_be_unique(self):
        d = Device(id="R1", kind=DeviceKind.R, ports=(("P", "a"), ("N", "b")), params={"VALUE": 1.0})
        with pytest.raises(ValueError):
            NetlistIR(devices=(d, d), nets=("a", "b"))
