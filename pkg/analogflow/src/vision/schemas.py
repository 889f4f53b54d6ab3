from enum import Enum
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ComponentClass(str, Enum):
    """Detector classes of the circuit-element dataset."""

    AC_SOURCE = "ac_source"
    BJT = "bjt"
    BATTERY = "battery"
    CAPACITOR = "capacitor"
    DC_SOURCE = "dc_source"
    DIODE = "diode"
    GROUND = "ground"
    INDUCTOR = "inductor"
    MOSFET = "mosfet"
    RESISTOR = "resistor"
    CURRENT_SOURCE = "current_source"
    VOLTAGE_SOURCE = "voltage_source"


Rect = tuple[int, int, int, int]
Side = Literal["left", "right", "top", "bottom"]


class ImageSize(BaseModel):
    w: int = Field(gt=0)
    h: int = Field(gt=0)


class DetectedComponent(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    id: str | None = None
    cls: ComponentClass = Field(alias="class")
    bbox: Rect
    conf: float = Field(1.0, ge=0.0, le=1.0)

    @field_validator("cls", mode="before")
    @classmethod
    def _normalize_class(cls, value):
        if isinstance(value, str):
            return value.strip().lower().replace(" ", "_").replace("-", "_")
        return value


class DetectionSet(BaseModel):
    """Component and text boxes produced offline for one schematic image."""

    image: ImageSize
    components: list[DetectedComponent] = Field(default_factory=list)
    text_boxes: list[Rect] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check(self) -> "DetectionSet":
        counters: dict[str, int] = {}
        for component in self.components:
            _check_rect(component.bbox, self.image, f"component {component.cls.value}")
            if component.id is None:
                counters[component.cls.value] = counters.get(component.cls.value, 0) + 1
                component.id = f"{component.cls.value}{counters[component.cls.value]}"
        ids = [c.id for c in self.components]
        if len(set(ids)) != len(ids):
            raise ValueError("component ids must be unique")
        for rect in self.text_boxes:
            _check_rect(rect, self.image, "text box")
        return self

    @property
    def image_size(self) -> tuple[int, int]:
        return self.image.w, self.image.h


def _check_rect(rect: Rect, image: ImageSize, what: str) -> None:
    x, y, w, h = rect
    if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > image.w or y + h > image.h:
        raise ValueError(f"{what} {rect} outside image {image.w}x{image.h}")


class PortContact(BaseModel):
    model_config = ConfigDict(frozen=True)

    component: str
    side: Side


class RegionStat(BaseModel):
    area: int
    centroid: tuple[float, float]
    touching: list[PortContact] = Field(default_factory=list)


class RegionLabeling(BaseModel):
    """Per-pixel region ids (0 = background) with per-region statistics."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    labels: np.ndarray
    region_stats: dict[int, RegionStat] = Field(default_factory=dict)

    @property
    def count(self) -> int:
        return len(self.region_stats)


class AnnotatedBundle(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    region_raster: np.ndarray
    overlay: np.ndarray
    node_map: dict[int, list[PortContact]]
    labeling: RegionLabeling


class BundleManifest(BaseModel):
    """On-disk description of an annotated bundle directory."""

    raw_image: str = "raw.png"
    regions_image: str = "regions.png"
    annotated_image: str = "overlay.png"
    node_map: dict[int, list[PortContact]] = Field(default_factory=dict)
    components: list[DetectedComponent] = Field(default_factory=list)
    region_count: int = 0

    def path(self, root: Path, name: str) -> Path:
        return Path(root) / getattr(self, name)
