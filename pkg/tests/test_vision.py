from collections import deque

import numpy as np
import pytest

from analogflow.core.config import VisionSettings
from analogflow.core.exceptions import DimensionMismatch
from analogflow.core.raster import save_png
from analogflow.src.vision.schemas import DetectionSet, PortContact, RegionLabeling
from analogflow.src.vision.service import (
    ExtractionService,
    annotate,
    derive_wire_mask,
    label_regions,
    merge_nodes,
    read_bundle,
)

from conftest import draw_schematic


def _empty_detections(w: int, h: int, boxes=()) -> DetectionSet:
    return DetectionSet.model_validate(
        {"image": {"w": w, "h": h}, "components": [{"class": "resistor", "bbox": list(b)} for b in boxes]}
    )


def flood_fill_regions(mask: np.ndarray, area_threshold: int) -> set[frozenset]:
    """8-connected components by BFS, small ones dropped."""
    seen = np.zeros_like(mask, dtype=bool)
    regions = set()
    rows, cols = mask.shape
    for r0 in range(rows):
        for c0 in range(cols):
            if not mask[r0, c0] or seen[r0, c0]:
                continue
            queue = deque([(r0, c0)])
            seen[r0, c0] = True
            pixels = []
            while queue:
                r, c = queue.popleft()
                pixels.append((r, c))
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        rr, cc = r + dr, c + dc
                        if 0 <= rr < rows and 0 <= cc < cols and mask[rr, cc] and not seen[rr, cc]:
                            seen[rr, cc] = True
                            queue.append((rr, cc))
            if len(pixels) >= area_threshold:
                regions.add(frozenset(pixels))
    return regions


def labeled_regions(labeling: RegionLabeling) -> set[frozenset]:
    labels = labeling.labels
    return {
        frozenset(map(tuple, np.argwhere(labels == k).tolist())) for k in range(1, labeling.count + 1)
    }


class TestWireMask:
    def test_blank_image(self):
        image = np.full((40, 60), 255, dtype=np.uint8)
        mask = derive_wire_mask(image, _empty_detections(60, 40, [(5, 5, 10, 10)]))
        assert not mask.any()

    def test_single_line(self):
        image = np.full((40, 60), 255, dtype=np.uint8)
        image[20, 5:55] = 0
        mask = derive_wire_mask(image, _empty_detections(60, 40))
        np.testing.assert_array_equal(mask, image == 0)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            derive_wire_mask(np.zeros((10, 10), dtype=np.uint8), _empty_detections(20, 10))

    def test_pixel_count_oracle(self, schematic):
        image, det = schematic
        expected = image <= 128
        for x, y, w, h in [c.bbox for c in det.components] + det.text_boxes:
            for r in range(max(0, y - 2), min(100, y + h + 2)):
                for c in range(max(0, x - 2), min(160, x + w + 2)):
                    expected[r, c] = False
        mask = derive_wire_mask(image, det, threshold=128, padding=2)
        assert int(mask.sum()) == int(expected.sum())

    def test_adding_a_box_never_adds_foreground(self):
        rng = np.random.default_rng(8)
        image = np.where(rng.random((50, 50)) < 0.4, 0, 255).astype(np.uint8)
        boxes = []
        previous = derive_wire_mask(image, _empty_detections(50, 50)).sum()
        for _ in range(10):
            x, y = rng.integers(0, 40, size=2)
            boxes.append((int(x), int(y), int(rng.integers(1, 10)), int(rng.integers(1, 10))))
            current = derive_wire_mask(image, _empty_detections(50, 50, boxes)).sum()
            assert current <= previous
            previous = current


class TestLabelRegions:
    def test_two_lines(self):
        mask = np.zeros((30, 40), dtype=bool)
        mask[5, 2:38] = True
        mask[20, 2:38] = True
        assert label_regions(mask, area_threshold=5, dilation_radius=2).count == 2

    @pytest.mark.parametrize("radius", [0, 2])
    def test_isolated_pixel_dropped(self, radius):
        mask = np.zeros((20, 20), dtype=bool)
        mask[10, 10] = True
        assert label_regions(mask, area_threshold=5, dilation_radius=radius).count == 0

    def test_dilation_bridges_small_gap(self):
        mask = np.zeros((20, 40), dtype=bool)
        mask[10, 2:18] = True
        mask[10, 21:38] = True
        assert label_regions(mask, area_threshold=5, dilation_radius=0).count == 2
        assert label_regions(mask, area_threshold=5, dilation_radius=2).count == 1

    def test_matches_flood_fill(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            mask = rng.random((40, 40)) < 0.3
            labeling = label_regions(mask, area_threshold=3, dilation_radius=0)
            assert labeled_regions(labeling) == flood_fill_regions(mask, 3)
            assert sorted(labeling.region_stats) == list(range(1, labeling.count + 1))
            assert all(stat.area >= 3 for stat in labeling.region_stats.values())

    def test_translation_invariance(self, schematic):
        image, det = schematic
        mask = derive_wire_mask(image, det)
        canvas = np.zeros((140, 200), dtype=bool)
        canvas[17 : 17 + 100, 23 : 23 + 160] = mask
        assert label_regions(canvas).count == label_regions(mask).count == 4


class TestMergeNodes:
    def test_far_regions_unchanged(self):
        mask = np.zeros((20, 140), dtype=bool)
        mask[10, 0:10] = True
        mask[10, 100:110] = True
        labeling = label_regions(mask, area_threshold=1, dilation_radius=0)
        merged = merge_nodes(labeling, centroid_eps=10)
        np.testing.assert_array_equal(merged.labels, labeling.labels)

    def test_identical_centroids_merge(self):
        mask = np.zeros((41, 41), dtype=bool)
        mask[5, 5:36] = mask[35, 5:36] = True
        mask[5:36, 5] = mask[5:36, 35] = True
        mask[18, 18:23] = mask[22, 18:23] = True
        mask[18:23, 18] = mask[18:23, 22] = True
        labeling = label_regions(mask, area_threshold=1, dilation_radius=0)
        assert labeling.count == 2
        merged = merge_nodes(labeling, centroid_eps=0.5)
        assert merged.count == 1
        assert merged.region_stats[1].area == int(mask.sum())

    def test_idempotent_and_monotone(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            mask = rng.random((60, 60)) < 0.08
            labeling = label_regions(mask, area_threshold=1, dilation_radius=0)
            once = merge_nodes(labeling, centroid_eps=6)
            twice = merge_nodes(once, centroid_eps=6)
            np.testing.assert_array_equal(once.labels, twice.labels)
            assert once.count <= labeling.count
            assert int((once.labels > 0).sum()) == int((labeling.labels > 0).sum())
            assert sorted(once.region_stats) == list(range(1, once.count + 1))


def perimeter_scan(labels: np.ndarray, det: DetectionSet, reach: int) -> set[tuple[int, str, str]]:
    found = set()
    height, width = labels.shape
    for component in det.components:
        x, y, w, h = component.bbox
        bands = {
            "left": [(r, c) for r in range(y, y + h) for c in range(x - reach, x)],
            "right": [(r, c) for r in range(y, y + h) for c in range(x + w, x + w + reach)],
            "top": [(r, c) for r in range(y - reach, y) for c in range(x, x + w)],
            "bottom": [(r, c) for r in range(y + h, y + h + reach) for c in range(x, x + w)],
        }
        for side, pixels in bands.items():
            for r, c in pixels:
                if 0 <= r < height and 0 <= c < width and labels[r, c]:
                    found.add((int(labels[r, c]), component.id, side))
    return found


class TestAnnotate:
    def test_distinct_palette(self, schematic):
        image, det = schematic
        bundle = ExtractionService().analyze(image, det)
        colors = {tuple(px) for px in bundle.region_raster.reshape(-1, 3).tolist()} - {(255, 255, 255)}
        assert len(colors) == bundle.labeling.count == 4

    def test_left_side_contact(self):
        image = np.full((40, 80), 255, dtype=np.uint8)
        image[20, 2:37] = 0
        det = DetectionSet.model_validate(
            {"image": {"w": 80, "h": 40}, "components": [{"id": "R7", "class": "resistor", "bbox": [40, 12, 20, 16]}]}
        )
        mask = derive_wire_mask(image, det, padding=2)
        bundle = annotate(image, det, label_regions(mask), reach=4)
        assert bundle.node_map == {1: [PortContact(component="R7", side="left")]}

    def test_node_map_matches_perimeter_scan(self, schematic):
        image, det = schematic
        bundle = ExtractionService().analyze(image, det)
        expected = perimeter_scan(bundle.labeling.labels, det, reach=4)
        got = {(region, c.component, c.side) for region, contacts in bundle.node_map.items() for c in contacts}
        assert got == expected
        assert ("R1", "left") in {(c.component, c.side) for c in bundle.node_map[1]}

    def test_touching_recorded_on_stats(self, schematic):
        image, det = schematic
        bundle = ExtractionService().analyze(image, det)
        for region, stat in bundle.labeling.region_stats.items():
            assert stat.touching == bundle.node_map[region]


def test_extract_writes_bundle(tmp_path, schematic):
    image, det = schematic
    image_path = save_png(image, tmp_path / "schematic.png")
    det_path = tmp_path / "detections.json"
    det_path.write_text(det.model_dump_json(by_alias=True))

    manifest = ExtractionService(VisionSettings()).extract(image_path, det_path, tmp_path / "bundle")

    assert manifest.region_count == 4
    reread = read_bundle(tmp_path / "bundle")
    assert reread == manifest
    assert (tmp_path / "bundle" / "overlay.png").is_file()
    assert (tmp_path / "bundle" / "node_map.json").is_file()


def test_schematic_fixture_is_deterministic():
    a, _ = draw_schematic()
    b, _ = draw_schematic()
    np.testing.assert_array_equal(a, b)
