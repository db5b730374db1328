"""Background corpus handling and the "over" operator."""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from PIL import Image

from .renderer import RgbaImage

log = logging.getLogger(__name__)

RASTER_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp"}


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class BackgroundCorpus:
    root: Path
    entries: tuple[Path, ...]

    def __post_init__(self):
        if not self.entries:
            raise CorpusError("empty background corpus")

    def __len__(self) -> int:
        return len(self.entries)

    def load(self, background_id: int) -> np.ndarray:
        return load_rgb(self.entries[background_id])


def scan_corpus(root) -> BackgroundCorpus:
    """All raster files below ``root``, sorted by their path relative to it."""
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"background directory not found: {root}")
    found = []

    def on_error(err):
        raise CorpusError(f"cannot read background directory: {err}")

    for dirpath, _, filenames in os.walk(root, onerror=on_error):
        for name in filenames:
            p = Path(dirpath) / name
            if p.suffix.lower() in RASTER_EXTENSIONS:
                found.append(p)
    found.sort(key=lambda p: p.relative_to(root).as_posix())
    if not found:
        raise CorpusError(f"empty background corpus: {root}")
    log.info("background corpus %s: %d images", root, len(found))
    return BackgroundCorpus(root, tuple(found))


@lru_cache(maxsize=64)
def load_rgb(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    arr.setflags(write=False)
    return arr


def fit_background(img: np.ndarray, w: int, h: int) -> np.ndarray:
    """Scale to fill (w, h) preserving aspect, then center-crop; bilinear."""
    img = np.asarray(img)
    ih, iw = img.shape[:2]
    if ih < 1 or iw < 1:
        raise ValueError("background image is empty")
    if (iw, ih) == (w, h):
        return img.copy()
    scale = max(w / iw, h / ih)
    sw, sh = max(w, round(iw * scale)), max(h, round(ih * scale))
    if (sw, sh) != (iw, ih):
        img = np.asarray(Image.fromarray(img).resize((sw, sh), Image.Resampling.BILINEAR))
    x0, y0 = (sw - w) // 2, (sh - h) // 2
    return img[y0 : y0 + h, x0 : x0 + w].copy()


def composite_over(fg: RgbaImage | np.ndarray, bg: np.ndarray, linear: bool = False, gamma: float = 2.2) -> np.ndarray:
    """``a * fg + (1 - a) * bg`` per channel with straight alpha.

    ``fg`` is an :class:`RgbaImage` or (H, W, 4) floats in [0, 1]; ``bg`` is
    (H, W, 3) uint8 or floats in [0, 1]. Blending happens on the encoded
    values unless ``linear`` is set. Returns (H, W, 3) floats in [0, 1].
    """
    px = fg.pixels if isinstance(fg, RgbaImage) else np.asarray(fg, dtype=np.float64)
    bg = np.asarray(bg)
    if bg.dtype == np.uint8:
        bg = bg / 255.0
    if px.shape[:2] != bg.shape[:2]:
        raise ValueError(f"foreground {px.shape[1]}x{px.shape[0]} and background {bg.shape[1]}x{bg.shape[0]} differ in size")
    a = px[..., 3:4]
    rgb = px[..., :3]
    if linear:
        out = (a * rgb**gamma + (1.0 - a) * bg**gamma) ** (1.0 / gamma)
    else:
        out = a * rgb + (1.0 - a) * bg
    return np.clip(out, 0.0, 1.0)
