import asyncio
import json
import re
from collections import Counter
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from analogflow.core.config import PipelineConfig, RailSettings
from analogflow.core.exceptions import AnalogFlowException, DomainError, MissingArtifact, NoParsableHypothesis
from analogflow.core.logging import get_logger
from analogflow.prompts import EXEMPLAR_DIR, load_prompt
from analogflow.src.llm.schemas import ChatMessage
from analogflow.src.llm.service import LLMGateway, compress_context
from analogflow.src.netlist.canonical import rail_fingerprint
from analogflow.src.netlist.matching import align, port_pairs
from analogflow.src.netlist.parser import parse_spice, serialize
from analogflow.src.netlist.schemas import Device, NetlistIR, PORT_ROLES
from analogflow.src.netlist.service import check_structure, recovery_score
from analogflow.src.reasoning.schemas import (
    BRANCH_IDS,
    BranchHypothesis,
    BranchId,
    BranchInput,
    FusionReport,
    FusionResult,
    MiclExemplar,
    Posterior,
    SlotVote,
)
from analogflow.src.vision.service import read_bundle

logger = get_logger(__name__)

FENCE = re.compile(r"```[ \t]*([A-Za-z0-9_+-]*)[^\n]*\n(.*?)```", re.DOTALL)
SPICE_LANGS = {"", "spice", "sp", "cir", "netlist", "ngspice"}
# Alignment bonus for slots whose kind and rail-adjacency fingerprints agree.
FINGERPRINT_WEIGHT = 1.0
EXEMPLAR_IMAGES: dict[BranchId, tuple[str, ...]] = {
    "raw": ("raw",),
    "annotated": ("annotated",),
    "dual": ("raw", "annotated"),
}


def load_exemplar(directory: Path | None, branch_id: BranchId) -> MiclExemplar:
    """Recorded exemplar interaction with the images matching ``branch_id``.

    Raises:
        MissingArtifact: If exemplar.json or one of its images is absent
    """
    directory = Path(directory or EXEMPLAR_DIR)
    manifest_path = directory / "exemplar.json"
    if not manifest_path.is_file():
        raise MissingArtifact(f"MICL exemplar not found: {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    images = tuple(directory / manifest["images"][name] for name in EXEMPLAR_IMAGES[branch_id])
    for image in images:
        if not image.is_file():
            raise MissingArtifact(f"MICL exemplar image not found: {image}")
    return MiclExemplar(images=images, prompt=manifest["prompt"], response=manifest["response"])


def build_branch_inputs(raw_img: Path, bundle_dir: Path, config: PipelineConfig) -> list[BranchInput]:
    """The raw, annotated and dual-image branch inputs for one schematic.

    Raises:
        MissingArtifact: If the raw image or the annotated bundle is missing
    """
    raw_img = Path(raw_img)
    if not raw_img.is_file():
        raise MissingArtifact(f"Schematic image not found: {raw_img}")
    bundle_dir = Path(bundle_dir)
    annotated = read_bundle(bundle_dir).path(bundle_dir, "annotated_image")

    version = config.reasoning.prompt_version
    flags = config.ablation
    system_prompt = load_prompt("extraction_system", version)
    images: dict[BranchId, tuple[Path, ...]] = {
        "raw": (raw_img,),
        "annotated": (annotated,),
        "dual": (raw_img, annotated),
    }
    inputs = []
    for branch_id in BRANCH_IDS:
        sections = [load_prompt(f"branch_{branch_id}", version)]
        if flags.cot:
            sections.append(load_prompt("cot_steps", version))
        sections.append("Generate the SPICE netlist for this schematic.")
        exemplar = icl_example = None
        if flags.micl:
            exemplar = load_exemplar(config.reasoning.exemplar_dir, branch_id)
        elif config.reasoning.icl_fallback:
            recorded = load_exemplar(config.reasoning.exemplar_dir, branch_id)
            icl_example = f"{load_prompt('icl_example', version)}\n\n{recorded.response}"
        inputs.append(
            BranchInput(
                branch_id=branch_id,
                images=images[branch_id],
                system_prompt=system_prompt,
                cot_prompt="\n\n".join(sections),
                micl_exemplar=exemplar,
                icl_example=icl_example,
            )
        )
    return inputs


def branch_messages(b: BranchInput) -> list[ChatMessage]:
    messages = [ChatMessage(role="system", text=b.system_prompt)]
    if b.micl_exemplar is not None:
        messages.append(ChatMessage(role="user", text=b.micl_exemplar.prompt, images=b.micl_exemplar.images))
        messages.append(ChatMessage(role="assistant", text=b.micl_exemplar.response))
    text = f"{b.icl_example}\n\n{b.cot_prompt}" if b.icl_example else b.cot_prompt
    messages.append(ChatMessage(role="user", text=text, images=b.images))
    return messages


def extract_spice_block(text: str) -> str | None:
    """Body of the last fenced block tagged as SPICE (or untagged)."""
    blocks = [body for lang, body in FENCE.findall(text) if lang.lower() in SPICE_LANGS]
    return blocks[-1] if blocks else None


def parse_answer(text: str, rails: RailSettings | None = None) -> tuple[NetlistIR | None, str | None]:
    """Parse the netlist in an assistant reply; returns (netlist, error)."""
    block = extract_spice_block(text)
    if block is None:
        return None, "no fenced netlist block"
    try:
        ir = parse_spice(block, rails)
    except (AnalogFlowException, ValidationError, ValueError) as e:
        return None, getattr(e, "detail", str(e))
    if not ir.devices:
        return None, "netlist block has no devices"
    return ir, None


async def run_branch(
    b: BranchInput,
    gw: LLMGateway,
    tag: str = "run",
    temperature: float = 0.2,
    rails: RailSettings | None = None,
) -> BranchHypothesis:
    """One extraction request; parse failures are recorded on the hypothesis."""
    req = gw.request(branch_messages(b), tag=f"{tag}:branch:{b.branch_id}", temperature=temperature)
    trace = await gw.complete(req)
    netlist, error = parse_answer(trace, rails)
    if error:
        logger.warning(f"Branch {b.branch_id} gave no usable netlist: {error}")
    else:
        logger.info(f"Branch {b.branch_id} produced {len(netlist.devices)} devices")
    return BranchHypothesis(branch_id=b.branch_id, netlist=netlist, trace=trace, parse_error=error)


async def run_branches(
    inputs: list[BranchInput],
    gw: LLMGateway,
    tag: str = "run",
    temperature: float = 0.2,
    rails: RailSettings | None = None,
) -> list[BranchHypothesis]:
    return list(await asyncio.gather(*(run_branch(b, gw, tag, temperature, rails) for b in inputs)))


class _Vote:
    """Ballots of one device slot, expressed in the reference net namespace."""

    def __init__(self, slot: str):
        self.slot = slot
        self.ballots: dict[BranchId, Device] = {}
        self.nets: dict[BranchId, tuple[str, ...]] = {}


def _winner(ballots: dict[BranchId, object], priority: list[BranchId]):
    """Most frequent value; ties go to the value backed by the highest-priority branch."""
    counts = Counter(ballots.values())
    best = max(counts.values())
    for branch in priority:
        if branch in ballots and counts[ballots[branch]] == best:
            return ballots[branch]
    raise ValueError("no ballots")


def consensus_vote(
    hyps: list[BranchHypothesis],
    rails: RailSettings | None = None,
    tie_break: tuple[str, ...] = ("annotated", "dual", "raw"),
) -> tuple[NetlistIR, FusionReport]:
    """Deterministic slot-wise majority consensus of the parsed hypotheses.

    The highest-priority parsed branch is the reference; every other branch
    is aligned onto it, devices with equal kind and rail-adjacency
    fingerprints drawing together. A slot is kept when present in a strict
    majority of parsed branches (half suffices when the reference holds it),
    its kind and each port net are taken by majority with priority tie-breaks.

    Raises:
        NoParsableHypothesis: If no hypothesis carries a netlist
    """
    priority: list[BranchId] = [b for b in tie_break if b in BRANCH_IDS]
    priority += [b for b in BRANCH_IDS if b not in priority]
    parsed = sorted((h for h in hyps if h.netlist is not None), key=lambda h: priority.index(h.branch_id))
    if not parsed:
        raise NoParsableHypothesis()
    reference = parsed[0]
    ref_ir = reference.netlist
    report = FusionReport(reference=reference.branch_id, parsed=[h.branch_id for h in parsed])
    if len(parsed) == 1:
        report.stage = "single"
        report.agreement = {reference.branch_id: 1.0}
        return ref_ir, report

    votes = {d.id: _Vote(d.id) for d in ref_ir.devices}
    for d in ref_ir.devices:
        votes[d.id].ballots[reference.branch_id] = d
        votes[d.id].nets[reference.branch_id] = d.nets

    leftovers: dict[BranchId, list[tuple[Device, tuple[str, ...]]]] = {}
    for h in parsed[1:]:
        alignment = align(h.netlist, ref_ir, fingerprint_weight=FINGERPRINT_WEIGHT)

        def to_ref(net: str, branch=h.branch_id, net_map=alignment.net_map) -> str:
            return net_map.get(net, f"{branch}_{net}")

        matched = set()
        for p_id, r_id in alignment.device_map.items():
            p, r = h.netlist.device(p_id), ref_ir.device(r_id)
            pairs, _ = port_pairs(p, r, alignment.net_map)
            nets = tuple(to_ref(pn) for pn, _ in pairs) if pairs else tuple(to_ref(n) for n in p.nets)
            votes[r_id].ballots[h.branch_id] = p
            votes[r_id].nets[h.branch_id] = nets
            matched.add(p_id)
        leftovers[h.branch_id] = [
            (d, tuple(to_ref(n) for n in d.nets)) for d in h.netlist.devices if d.id not in matched
        ]

    # Devices the reference lacks but two other branches agree on.
    others = [h.branch_id for h in parsed[1:]]
    extra = 0
    for i, first in enumerate(others):
        for second in others[i + 1 :]:
            for d, nets in list(leftovers.get(first, [])):
                twin = next(
                    (
                        (e, e_nets)
                        for e, e_nets in leftovers.get(second, [])
                        if e.kind == d.kind and sorted(e_nets) == sorted(nets)
                    ),
                    None,
                )
                if twin is None:
                    continue
                extra += 1
                vote = _Vote(f"+{extra}")
                vote.ballots = {first: d, second: twin[0]}
                vote.nets = {first: nets, second: twin[1]}
                votes[vote.slot] = vote
                leftovers[first].remove((d, nets))
                leftovers[second].remove(twin)

    netlists = {h.branch_id: h.netlist for h in parsed}
    n = len(parsed)
    devices: list[Device] = []
    taken_ids = set()
    for vote in votes.values():
        count = len(vote.ballots)
        kept = 2 * count > n or (2 * count == n and reference.branch_id in vote.ballots)
        kind = _winner({b: d.kind for b, d in vote.ballots.items()}, priority)
        report.slots.append(
            SlotVote(
                slot=vote.slot,
                kind=kind.value,
                present=[b for b in priority if b in vote.ballots],
                kind_votes={b: d.kind.value for b, d in vote.ballots.items()},
                fingerprints={b: rail_fingerprint(netlists[b], d.id) for b, d in vote.ballots.items()},
                kept=kept,
            )
        )
        if not kept:
            continue
        voters = [b for b in priority if b in vote.ballots and vote.ballots[b].kind == kind]
        template = vote.ballots[voters[0]]
        ports = []
        for index, role in enumerate(PORT_ROLES[kind]):
            ballots = {b: vote.nets[b][index] for b in voters if len(vote.nets[b]) > index}
            ports.append((role, _winner(ballots, priority)))
        device_id = template.id if vote.slot.startswith("+") else vote.slot
        while device_id in taken_ids or (vote.slot.startswith("+") and device_id in votes):
            device_id = f"{device_id}_x"
        taken_ids.add(device_id)
        devices.append(
            Device(id=device_id, kind=kind, ports=tuple(ports), params=template.params, model=template.model)
        )

    models = {}
    for h in reversed(parsed):
        models.update(h.netlist.models)
    draft = NetlistIR.build(devices, rails=rails, models=models, subcircuits=ref_ir.subcircuits)
    report.agreement = {h.branch_id: _branch_agreement(h.netlist, draft) for h in parsed}
    return draft, report


def _branch_agreement(hypothesis: NetlistIR, consensus: NetlistIR) -> float:
    score = recovery_score(hypothesis, consensus)
    return (score.component_accuracy + score.edge_accuracy) / 2


def consensus_posterior(p_struct: list[float], consistent: list[list[bool]]) -> Posterior:
    """Normalised p_struct(y) * prod_b 1[consistent(y, y_b)] over candidates y.

    Raises:
        DomainError: If a structural prior lies outside [0, 1]
    """
    if any(not 0.0 <= p <= 1.0 for p in p_struct):
        raise DomainError("structural prior must lie in [0, 1]")
    weights = np.array([p * float(all(flags)) for p, flags in zip(p_struct, consistent)], dtype=float)
    total = weights.sum()
    if total == 0:
        return Posterior(weights=[0.0] * len(p_struct), best=None)
    weights /= total
    return Posterior(weights=weights.tolist(), best=int(np.argmax(weights)))


def _consistent(candidate: NetlistIR, hypothesis: NetlistIR) -> bool:
    score = recovery_score(hypothesis, candidate)
    return score.component_accuracy >= 0.5 and score.edge_accuracy >= 0.5


def joint_pass_lower_bound(p: list[float]) -> float:
    """1 - prod(1 - p_b): success when at least one branch covers the truth.

    Raises:
        DomainError: If any probability lies outside [0, 1]
    """
    if any(not 0.0 <= value <= 1.0 for value in p):
        raise DomainError(f"branch probabilities must lie in [0, 1], got {list(p)}")
    return 1.0 - float(np.prod([1.0 - value for value in p]))


def _fusion_messages(
    hyps: list[BranchHypothesis], draft: NetlistIR, summary: str, version: str
) -> list[ChatMessage]:
    candidates = []
    for h in sorted(hyps, key=lambda h: BRANCH_IDS.index(h.branch_id)):
        body = serialize(h.netlist) if h.netlist is not None else f"(unparsable: {h.parse_error})"
        candidates.append(f"[{h.branch_id}]\n{body}")
    user = load_prompt("fusion_user", version).format(
        summary=summary, candidates="\n\n".join(candidates), draft=serialize(draft)
    )
    return [
        ChatMessage(role="system", text=load_prompt("fusion_system", version)),
        ChatMessage(role="user", text=user),
    ]


async def fuse(
    hyps: list[BranchHypothesis],
    gw: LLMGateway | None,
    config: PipelineConfig,
    tag: str = "run",
) -> FusionResult:
    """Fuse branch hypotheses into one netlist.

    Stage one is the deterministic consensus vote. With intent reasoning
    enabled, a text-only fusion request sees the compressed traces, every
    candidate and the draft; its answer replaces the draft only when it
    parses and passes the structural check. ``report.valid`` is false when
    the netlist handed back still fails that check.

    Raises:
        NoParsableHypothesis: If no hypothesis carries a netlist
    """
    rails = config.rails
    draft, report = consensus_vote(hyps, rails, config.reasoning.tie_break)
    report.consensus_problems = check_structure(draft)
    if report.consensus_problems:
        logger.warning(f"Consensus draft has structural problems: {'; '.join(report.consensus_problems)}")
    fused = draft

    candidates: dict[str, NetlistIR] = {"consensus": draft}
    if config.ablation.intent and gw is not None:
        version = config.reasoning.prompt_version
        summary = await compress_context(
            gw,
            [h.trace for h in hyps],
            tag=f"{tag}:compress",
            temperature=config.llm.summary_temperature,
            prompt_version=version,
        )
        report.summary = summary
        answer = await gw.complete(
            gw.request(
                _fusion_messages(hyps, draft, summary, version),
                tag=f"{tag}:fuse",
                temperature=config.llm.fusion_temperature,
            )
        )
        refined, error = parse_answer(answer, rails)
        if refined is None:
            report.llm_problems = [error]
        else:
            report.llm_problems = check_structure(refined)
            candidates["llm"] = refined
        if not report.llm_problems:
            fused = refined
            report.stage = "llm"
        else:
            logger.warning(f"Fusion answer rejected, keeping consensus: {'; '.join(report.llm_problems)}")

    report.valid = fused is not draft or not report.consensus_problems

    for h in hyps:
        if h.netlist is not None:
            candidates[h.branch_id] = h.netlist
    parsed = [h.netlist for h in hyps if h.netlist is not None]
    names = list(candidates)
    posterior = consensus_posterior(
        [0.0 if check_structure(candidates[name]) else 1.0 for name in names],
        [[_consistent(candidates[name], other) for other in parsed] for name in names],
    )
    report.posterior = dict(zip(names, posterior.weights))
    logger.info(f"Fused netlist with {len(fused.devices)} devices (stage: {report.stage})")
    return FusionResult(netlist=fused, report=report)
