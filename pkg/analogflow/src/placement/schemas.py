from pydantic import BaseModel, ConfigDict, Field, model_validator

Point = tuple[float, float]
Rect = tuple[float, float, float, float]


class Block(BaseModel):
    """A placeable footprint in µm; pin offsets are from the lower-left corner."""

    model_config = ConfigDict(frozen=True)

    id: str
    width: float = Field(gt=0)
    height: float = Field(gt=0)
    pins: dict[str, Point] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_pins(self) -> "Block":
        for name, (dx, dy) in self.pins.items():
            if not (0 <= dx <= self.width and 0 <= dy <= self.height):
                raise ValueError(f"{self.id}: pin {name} lies outside the footprint")
        return self

    def size(self, rotated: bool = False) -> tuple[float, float]:
        return (self.height, self.width) if rotated else (self.width, self.height)

    def pin_offset(self, pin: str, rotated: bool = False) -> Point:
        dx, dy = self.pins[pin]
        # quarter turn counter-clockwise, shifted back into the first quadrant
        return (self.height - dy, dx) if rotated else (dx, dy)


class PlacementInstance(BaseModel):
    blocks: list[Block]
    # net -> [(block id, pin name)]
    nets: dict[str, list[tuple[str, str]]] = Field(default_factory=dict)
    # (left member, right member), mirrored about a shared vertical axis
    symmetry_pairs: list[tuple[str, str]] = Field(default_factory=list)
    spacing: float = Field(1.0, ge=0)

    @model_validator(mode="after")
    def _check(self) -> "PlacementInstance":
        blocks = {b.id: b for b in self.blocks}
        if len(blocks) != len(self.blocks):
            raise ValueError("block ids must be unique")
        paired: set[str] = set()
        for a, b in self.symmetry_pairs:
            if a not in blocks or b not in blocks:
                raise ValueError(f"symmetry pair ({a}, {b}) names an unknown block")
            if {a, b} & paired or a == b:
                raise ValueError(f"block of pair ({a}, {b}) already belongs to a pair")
            if blocks[a].size() != blocks[b].size():
                raise ValueError(f"symmetry pair ({a}, {b}) has unequal footprints")
            paired |= {a, b}
        for net, pins in self.nets.items():
            for block, pin in pins:
                if block not in blocks or pin not in blocks[block].pins:
                    raise ValueError(f"net {net} references unknown pin {block}.{pin}")
        return self

    def block(self, block_id: str) -> Block:
        for b in self.blocks:
            if b.id == block_id:
                return b
        raise KeyError(block_id)


class SequencePair(BaseModel):
    """Two permutations of placement units plus the set of rotated units."""

    model_config = ConfigDict(frozen=True)

    pos: tuple[str, ...]
    neg: tuple[str, ...]
    rotated: frozenset[str] = frozenset()

    @model_validator(mode="after")
    def _check(self) -> "SequencePair":
        if sorted(self.pos) != sorted(self.neg) or len(set(self.pos)) != len(self.pos):
            raise ValueError("sequence pair halves must be permutations of the same ids")
        return self


class Placement(BaseModel):
    positions: dict[str, Point]
    rotated: list[str] = Field(default_factory=list)
    bbox: Point = (0.0, 0.0)

    def rect(self, instance: PlacementInstance, block_id: str) -> Rect:
        x, y = self.positions[block_id]
        w, h = instance.block(block_id).size(block_id in self.rotated)
        return x, y, w, h

    def rects(self, instance: PlacementInstance) -> dict[str, Rect]:
        return {block_id: self.rect(instance, block_id) for block_id in self.positions}

    def pin_position(self, instance: PlacementInstance, block_id: str, pin: str) -> Point:
        x, y = self.positions[block_id]
        dx, dy = instance.block(block_id).pin_offset(pin, block_id in self.rotated)
        return x + dx, y + dy


class CostBreakdown(BaseModel):
    area: float
    wirelength: float
    symmetry: float
    total: float


class AnnealResult(BaseModel):
    placement: Placement
    sequence_pair: SequencePair
    cost: CostBreakdown
    # best cost after every move
    trace: list[float] = Field(default_factory=list)
    # cost of the current state after every move
    current_trace: list[float] = Field(default_factory=list)
    initial_temperature: float = 0.0


class PlacementArtifact(BaseModel):
    """What the place stage writes and the route stage reads back."""

    instance: PlacementInstance
    placement: Placement
    sequence_pair: SequencePair
    cost: CostBreakdown
