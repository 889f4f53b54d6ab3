"""Raster IO and palette helpers shared by the vision stage."""

import colorsys
import hashlib
from pathlib import Path

import numpy as np
from PIL import Image

GOLDEN_RATIO_CONJUGATE = 0.618033988749895


def load_grayscale(path: Path) -> np.ndarray:
    """Read a PGM or PNG file as an 8-bit grayscale array (rows x cols)."""
    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=np.uint8).copy()


def save_png(array: np.ndarray, path: Path) -> Path:
    """Write a grayscale (H, W) or RGB (H, W, 3) uint8 array as PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(array, dtype=np.uint8)).save(path, format="PNG")
    return path


def palette_color(region_id: int) -> tuple[int, int, int]:
    """Deterministic RGB color for a region id (golden-ratio hue walk)."""
    hue = (region_id * GOLDEN_RATIO_CONJUGATE) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.75, 0.9)
    return int(round(r * 255)), int(round(g * 255)), int(round(b * 255))


def file_digest(path: Path) -> str:
    """SHA-256 of a file's bytes."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
