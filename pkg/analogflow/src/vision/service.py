import json
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont
from scipy.sparse.csgraph import connected_components
from skimage.measure import label
from skimage.morphology import binary_dilation, disk
from sklearn.neighbors import radius_neighbors_graph

from analogflow.core.config import VisionSettings
from analogflow.core.exceptions import DimensionMismatch, MissingArtifact
from analogflow.core.logging import get_logger
from analogflow.core.raster import load_grayscale, palette_color, save_png
from analogflow.src.vision.schemas import (
    AnnotatedBundle,
    BundleManifest,
    DetectionSet,
    PortContact,
    RegionLabeling,
    RegionStat,
)

logger = get_logger(__name__)

SIDES = ("left", "right", "top", "bottom")


def derive_wire_mask(
    image: np.ndarray,
    det: DetectionSet,
    threshold: int = 128,
    padding: int = 2,
) -> np.ndarray:
    """Wire-only foreground: dark pixels outside every (padded) component and text box.

    Raises:
        DimensionMismatch: If the raster size differs from the detection set
    """
    height, width = image.shape[:2]
    if (width, height) != det.image_size:
        raise DimensionMismatch(f"Image is {width}x{height}, detections expect {det.image_size[0]}x{det.image_size[1]}")
    mask = image <= threshold
    for x, y, w, h in [c.bbox for c in det.components] + list(det.text_boxes):
        mask[max(0, y - padding) : y + h + padding, max(0, x - padding) : x + w + padding] = False
    return mask


def _region_stats(labels: np.ndarray) -> dict[int, RegionStat]:
    flat = labels.ravel()
    count = int(flat.max()) if flat.size else 0
    if count == 0:
        return {}
    rows, cols = np.indices(labels.shape)
    area = np.bincount(flat, minlength=count + 1)
    sum_x = np.bincount(flat, weights=cols.ravel(), minlength=count + 1)
    sum_y = np.bincount(flat, weights=rows.ravel(), minlength=count + 1)
    return {
        k: RegionStat(area=int(area[k]), centroid=(float(sum_x[k] / area[k]), float(sum_y[k] / area[k])))
        for k in range(1, count + 1)
    }


def label_regions(mask: np.ndarray, area_threshold: int = 25, dilation_radius: int = 2) -> RegionLabeling:
    """Label electrically connected wire regions.

    Components are found on the dilated mask so small gaps are bridged, but
    only original foreground pixels receive a label and count toward area.
    """
    mask = np.asarray(mask, dtype=bool)
    grown = binary_dilation(mask, footprint=disk(dilation_radius)) if dilation_radius > 0 else mask
    components = label(grown, connectivity=2)
    components = np.where(mask, components, 0)

    ids, areas = np.unique(components[components > 0], return_counts=True)
    kept = ids[areas >= area_threshold]
    mapping = np.zeros(int(components.max()) + 1, dtype=np.int32)
    mapping[kept] = np.arange(1, len(kept) + 1, dtype=np.int32)
    labels = mapping[components]
    logger.debug(f"Labelled {len(kept)} regions ({len(ids) - len(kept)} below area threshold)")
    return RegionLabeling(labels=labels, region_stats=_region_stats(labels))


def merge_nodes(labeling: RegionLabeling, centroid_eps: float = 8.0) -> RegionLabeling:
    """Merge regions whose centroids lie within ``centroid_eps``; repeats to a fixed point."""
    labels = labeling.labels.copy()
    while True:
        stats = _region_stats(labels)
        if len(stats) <= 1:
            break
        centroids = np.array([stats[k].centroid for k in sorted(stats)])
        graph = radius_neighbors_graph(centroids, radius=centroid_eps, mode="connectivity", include_self=False)
        n_groups, group = connected_components(graph, directed=False)
        if n_groups == len(stats):
            break
        renumber: dict[int, int] = {}
        mapping = np.zeros(len(stats) + 1, dtype=np.int32)
        for region, g in enumerate(group, start=1):
            mapping[region] = renumber.setdefault(int(g), len(renumber) + 1)
        labels = mapping[labels]
    return RegionLabeling(labels=labels, region_stats=_region_stats(labels))


def _side_strips(bbox, reach: int, shape) -> dict[str, tuple[slice, slice]]:
    x, y, w, h = bbox
    height, width = shape
    return {
        "left": (slice(y, y + h), slice(max(0, x - reach), x)),
        "right": (slice(y, y + h), slice(x + w, min(width, x + w + reach))),
        "top": (slice(max(0, y - reach), y), slice(x, x + w)),
        "bottom": (slice(y + h, min(height, y + h + reach)), slice(x, x + w)),
    }


def node_contacts(labels: np.ndarray, det: DetectionSet, reach: int) -> dict[int, list[PortContact]]:
    """Regions found in a strip of width ``reach`` just outside each bbox side."""
    node_map: dict[int, set[PortContact]] = {k: set() for k in np.unique(labels[labels > 0]).tolist()}
    for component in det.components:
        for side, (rows, cols) in _side_strips(component.bbox, reach, labels.shape).items():
            for region in np.unique(labels[rows, cols]).tolist():
                if region:
                    node_map[region].add(PortContact(component=component.id, side=side))
    return {
        k: sorted(contacts, key=lambda c: (c.component, SIDES.index(c.side)))
        for k, contacts in sorted(node_map.items())
    }


def _region_raster(labels: np.ndarray) -> np.ndarray:
    count = int(labels.max()) if labels.size else 0
    lut = np.full((count + 1, 3), 255, dtype=np.uint8)
    for k in range(1, count + 1):
        lut[k] = palette_color(k)
    return lut[labels]


def _overlay(image: np.ndarray, det: DetectionSet, labeling: RegionLabeling) -> np.ndarray:
    canvas = Image.fromarray(_region_raster(labeling.labels))
    gray = Image.fromarray(image).convert("RGB")
    canvas = Image.fromarray(np.where(labeling.labels[..., None] > 0, np.asarray(canvas), np.asarray(gray)))
    draw = ImageDraw.Draw(canvas)
    font = ImageFont.load_default()
    for component in det.components:
        x, y, w, h = component.bbox
        draw.rectangle([x, y, x + w - 1, y + h - 1], outline=(220, 30, 30))
        draw.text((x + 1, y + 1), component.id, fill=(220, 30, 30), font=font)
    for region, stat in labeling.region_stats.items():
        cx, cy = stat.centroid
        draw.text((cx, cy), f"N{region}", fill=(0, 0, 0), font=font)
    return np.asarray(canvas, dtype=np.uint8)


def annotate(image: np.ndarray, det: DetectionSet, labeling: RegionLabeling, reach: int = 4) -> AnnotatedBundle:
    """Colour-coded regions, node-to-component contacts and the labelled overlay."""
    node_map = node_contacts(labeling.labels, det, reach)
    stats = {
        k: stat.model_copy(update={"touching": node_map.get(k, [])}) for k, stat in labeling.region_stats.items()
    }
    labeling = RegionLabeling(labels=labeling.labels, region_stats=stats)
    return AnnotatedBundle(
        region_raster=_region_raster(labeling.labels),
        overlay=_overlay(image, det, labeling),
        node_map=node_map,
        labeling=labeling,
    )


def load_detections(path: Path) -> DetectionSet:
    path = Path(path)
    if not path.is_file():
        raise MissingArtifact(f"Detections not found: {path}")
    return DetectionSet.model_validate_json(path.read_text(encoding="utf-8"))


def read_bundle(bundle_dir: Path) -> BundleManifest:
    """Read an annotated bundle directory.

    Raises:
        MissingArtifact: If the manifest or one of its images is missing
    """
    bundle_dir = Path(bundle_dir)
    manifest_path = bundle_dir / "bundle.json"
    if not manifest_path.is_file():
        raise MissingArtifact(f"Bundle manifest not found: {manifest_path}")
    manifest = BundleManifest.model_validate_json(manifest_path.read_text(encoding="utf-8"))
    for name in ("raw_image", "annotated_image"):
        if not manifest.path(bundle_dir, name).is_file():
            raise MissingArtifact(f"Bundle image missing: {manifest.path(bundle_dir, name)}")
    return manifest


class ExtractionService:
    """Image preprocessing: wire mask, regions, node merge and annotation."""

    def __init__(self, settings: VisionSettings | None = None):
        self.settings = settings or VisionSettings()

    def analyze(self, image: np.ndarray, det: DetectionSet) -> AnnotatedBundle:
        """Run the full connectivity analysis on an in-memory raster."""
        s = self.settings
        mask = derive_wire_mask(image, det, s.binarize_threshold, s.dilation_radius)
        labeling = label_regions(mask, s.area_threshold, s.dilation_radius)
        merged = merge_nodes(labeling, s.centroid_eps)
        logger.info(f"Found {merged.count} electrical regions ({labeling.count} before merge)")
        return annotate(image, det, merged, reach=s.dilation_radius + 2)

    def extract(self, image_path: Path, detections_path: Path, out_dir: Path) -> BundleManifest:
        """Analyze an image file and write the annotated bundle to ``out_dir``."""
        image_path = Path(image_path)
        if not image_path.is_file():
            raise MissingArtifact(f"Schematic image not found: {image_path}")
        image = load_grayscale(image_path)
        det = load_detections(detections_path)
        bundle = self.analyze(image, det)

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest = BundleManifest(
            node_map=bundle.node_map,
            components=det.components,
            region_count=bundle.labeling.count,
        )
        save_png(image, out_dir / manifest.raw_image)
        save_png(bundle.region_raster, out_dir / manifest.regions_image)
        save_png(bundle.overlay, out_dir / manifest.annotated_image)
        (out_dir / "node_map.json").write_text(
            json.dumps({str(k): [c.model_dump() for c in v] for k, v in bundle.node_map.items()}, indent=2),
            encoding="utf-8",
        )
        (out_dir / "bundle.json").write_text(manifest.model_dump_json(indent=2, by_alias=True), encoding="utf-8")
        logger.info(f"Wrote annotated bundle: {out_dir}")
        return manifest
