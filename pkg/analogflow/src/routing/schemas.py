from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

# (layer, ix, iy); layer 0 prefers horizontal runs, layer 1 vertical
Cell = tuple[int, int, int]

LAYERS = 2
FREE = -1


class RoutingGrid(BaseModel):
    """Two-layer cell lattice over the placement bbox plus margin.

    Cell (l, ix, iy) covers [ox + ix·pitch, ox + (ix+1)·pitch) × [oy + iy·pitch, ...).
    ``occupancy`` holds the index of the owning net in ``net_names`` or FREE.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    pitch: float
    origin: tuple[float, float]
    nx: int
    ny: int
    obstacles: np.ndarray
    history: np.ndarray
    occupancy: np.ndarray
    net_names: list[str] = Field(default_factory=list)
    pins: dict[str, list[Cell]] = Field(default_factory=dict)
    sensitive: set[str] = Field(default_factory=set)

    @classmethod
    def empty(cls, nx: int, ny: int, pitch: float = 1.0, origin: tuple[float, float] = (0.0, 0.0)) -> "RoutingGrid":
        shape = (LAYERS, nx, ny)
        return cls(
            pitch=pitch,
            origin=origin,
            nx=nx,
            ny=ny,
            obstacles=np.zeros(shape, dtype=bool),
            history=np.zeros(shape, dtype=float),
            occupancy=np.full(shape, FREE, dtype=np.int32),
        )

    def net_index(self, net: str) -> int:
        if net not in self.net_names:
            self.net_names.append(net)
        return self.net_names.index(net)

    def add_pin(self, net: str, cell: Cell) -> None:
        self.occupancy[cell] = self.net_index(net)
        pins = self.pins.setdefault(net, [])
        if cell not in pins:
            pins.append(cell)

    def in_bounds(self, cell: Cell) -> bool:
        layer, ix, iy = cell
        return 0 <= layer < LAYERS and 0 <= ix < self.nx and 0 <= iy < self.ny

    def center(self, cell: Cell) -> tuple[float, float]:
        _, ix, iy = cell
        return self.origin[0] + (ix + 0.5) * self.pitch, self.origin[1] + (iy + 0.5) * self.pitch

    def neighbors(self, cell: Cell) -> list[Cell]:
        layer, ix, iy = cell
        candidates = [
            (layer, ix + 1, iy),
            (layer, ix - 1, iy),
            (layer, ix, iy + 1),
            (layer, ix, iy - 1),
            (1 - layer, ix, iy),
        ]
        return [c for c in candidates if self.in_bounds(c)]

    def owner(self, cell: Cell) -> str | None:
        index = int(self.occupancy[cell])
        return None if index == FREE else self.net_names[index]


class Route(BaseModel):
    """One routed net; each segment is a contiguous cell path joined to the tree."""

    net: str
    segments: list[list[Cell]] = Field(default_factory=list)
    length: float = 0.0
    via_count: int = 0
    cost: float = 0.0
    mirrored_from: str | None = None

    @property
    def path(self) -> list[Cell]:
        seen: dict[Cell, None] = {}
        for segment in self.segments:
            for cell in segment:
                seen.setdefault(tuple(cell), None)
        return list(seen)


class NetPair(BaseModel):
    """Nets on mirrored pins of a symmetric device pair; ``b`` is routed as the mirror of ``a``."""

    a: str
    b: str
    axis: float


class Violation(BaseModel):
    kind: Literal["spacing", "via", "off_grid", "obstacle"]
    nets: tuple[str, ...]
    cells: tuple[Cell, ...]


class RoutingReport(BaseModel):
    routes: list[Route] = Field(default_factory=list)
    unrouted: list[str] = Field(default_factory=list)
    asymmetric: list[str] = Field(default_factory=list)
    violations: list[Violation] = Field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.unrouted and not self.violations
