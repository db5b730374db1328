"""Automatic labels from the alpha channel and the dataset manifest format.

The manifest is one UTF-8 JSON document shaped like a COCO detection file
(``images``, ``annotations``, ``categories``) with a ``synthforge`` block
holding per-sample provenance: the full scene draw, seed and split.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .renderer import RgbaImage
from .sampling import SceneSample

MANIFEST_VERSION = 1
SPLITS = ("train", "val")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class BoundingBox:
    """Inclusive pixel bounds, origin top-left."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"inverted bounding box {self}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        return self.y_max - self.y_min + 1

    @property
    def area(self) -> int:
        return self.width * self.height

    def to_coco(self) -> list[int]:
        return [self.x_min, self.y_min, self.width, self.height]

    @classmethod
    def from_coco(cls, xywh) -> "BoundingBox":
        x, y, w, h = (int(v) for v in xywh)
        return cls(x, y, x + w - 1, y + h - 1)

    def within(self, width: int, height: int) -> bool:
        return self.x_min >= 0 and self.y_min >= 0 and self.x_max < width and self.y_max < height

    def iou(self, other: "BoundingBox") -> float:
        ix = min(self.x_max, other.x_max) - max(self.x_min, other.x_min) + 1
        iy = min(self.y_max, other.y_max) - max(self.y_min, other.y_min) + 1
        if ix <= 0 or iy <= 0:
            return 0.0
        inter = ix * iy
        return inter / (self.area + other.area - inter)


def alpha_mask(fg: RgbaImage | np.ndarray, threshold: float = 0.0) -> np.ndarray:
    """Boolean (H, W) mask of pixels with alpha strictly above ``threshold``."""
    alpha = fg.alpha if isinstance(fg, RgbaImage) else np.asarray(fg)[..., 3]
    return alpha > threshold


def tight_bbox(mask: np.ndarray) -> BoundingBox | None:
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(mask.any(axis=0))
    return BoundingBox(int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1]))


def save_mask(mask: np.ndarray, path) -> None:
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path, format="PNG")


def load_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 127


@dataclass(frozen=True)
class AnnotatedSample:
    image_path: str
    mask_path: str
    class_id: int
    class_name: str
    bbox: BoundingBox
    scene: SceneSample
    seed: int
    width: int
    height: int
    index: int = 0

    @property
    def image_id(self) -> str:
        return self.image_path

    def to_dict(self) -> dict:
        return {
            "image_path": self.image_path,
            "mask_path": self.mask_path,
            "class_id": self.class_id,
            "class_name": self.class_name,
            "bbox": [self.bbox.x_min, self.bbox.y_min, self.bbox.x_max, self.bbox.y_max],
            "scene": self.scene.to_dict(),
            "seed": self.seed,
            "width": self.width,
            "height": self.height,
            "index": self.index,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnnotatedSample":
        return cls(
            image_path=d["image_path"],
            mask_path=d["mask_path"],
            class_id=int(d["class_id"]),
            class_name=d["class_name"],
            bbox=BoundingBox(*(int(v) for v in d["bbox"])),
            scene=SceneSample.from_dict(d["scene"]),
            seed=int(d["seed"]),
            width=int(d["width"]),
            height=int(d["height"]),
            index=int(d.get("index", 0)),
        )


@dataclass
class DatasetManifest:
    classes: list[str]
    samples: list[AnnotatedSample] = field(default_factory=list)
    # parallel to samples: "train" / "val"; None when no split was made
    split: list[str] | None = None
    generator_config_hash: str = ""

    def validate(self) -> None:
        n = len(self.classes)
        for s in self.samples:
            if not 0 <= s.class_id < n:
                raise ManifestError(f"{s.image_path}: class_id {s.class_id} outside [0, {n})")
            if self.classes[s.class_id] != s.class_name:
                raise ManifestError(f"{s.image_path}: class name {s.class_name!r} does not match class_id")
            if not s.bbox.within(s.width, s.height):
                raise ManifestError(f"{s.image_path}: bounding box outside the image")
        if self.split is not None:
            if len(self.split) != len(self.samples):
                raise ManifestError("split labels must cover every sample exactly once")
            bad = set(self.split) - set(SPLITS)
            if bad:
                raise ManifestError(f"unknown split labels {sorted(bad)}")

    def truth(self, split: str | None = None) -> dict[str, int]:
        """image_id -> class_id, optionally restricted to one split."""
        out = {}
        for i, s in enumerate(self.samples):
            if split is None or (self.split is not None and self.split[i] == split):
                out[s.image_id] = s.class_id
        return out

    def class_counts(self) -> list[int]:
        counts = [0] * len(self.classes)
        for s in self.samples:
            counts[s.class_id] += 1
        return counts

    def to_json(self) -> dict:
        images, annotations, provenance = [], [], []
        for i, s in enumerate(self.samples):
            images.append({"id": i, "file_name": s.image_path, "width": s.width, "height": s.height})
            annotations.append({
                "id": i,
                "image_id": i,
                "category_id": s.class_id,
                "bbox": s.bbox.to_coco(),
                "area": s.bbox.area,
                "iscrowd": 0,
                "mask_file": s.mask_path,
            })
            provenance.append({
                "image_id": i,
                "index": s.index,
                "seed": s.seed,
                "split": None if self.split is None else self.split[i],
                "scene": s.scene.to_dict(),
            })
        return {
            "version": MANIFEST_VERSION,
            "info": {"generator": "synthforge", "generator_config_hash": self.generator_config_hash},
            "categories": [{"id": i, "name": name} for i, name in enumerate(self.classes)],
            "images": images,
            "annotations": annotations,
            "synthforge": {"has_split": self.split is not None, "samples": provenance},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "DatasetManifest":
        version = doc.get("version")
        if version != MANIFEST_VERSION:
            raise ManifestError(f"unsupported manifest version {version!r} (expected {MANIFEST_VERSION})")
        cats = sorted(doc["categories"], key=lambda c: c["id"])
        classes = [c["name"] for c in cats]
        images = {im["id"]: im for im in doc["images"]}
        anns = {a["image_id"]: a for a in doc["annotations"]}
        prov = doc["synthforge"]["samples"]
        samples, split = [], []
        for p in prov:
            im, ann = images[p["image_id"]], anns[p["image_id"]]
            cid = int(ann["category_id"])
            samples.append(AnnotatedSample(
                image_path=im["file_name"],
                mask_path=ann["mask_file"],
                class_id=cid,
                class_name=classes[cid],
                bbox=BoundingBox.from_coco(ann["bbox"]),
                scene=SceneSample.from_dict(p["scene"]),
                seed=int(p["seed"]),
                width=int(im["width"]),
                height=int(im["height"]),
                index=int(p["index"]),
            ))
            split.append(p["split"])
        has_split = doc["synthforge"].get("has_split", False)
        return cls(
            classes=classes,
            samples=samples,
            split=split if has_split else None,
            generator_config_hash=doc.get("info", {}).get("generator_config_hash", ""),
        )


def write_manifest(manifest: DatasetManifest, path) -> None:
    manifest.validate()
    text = json.dumps(manifest.to_json(), indent=1, ensure_ascii=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_manifest(path) -> DatasetManifest:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: not valid JSON ({e})") from None
    try:
        return DatasetManifest.from_json(doc)
    except (KeyError, TypeError) as e:
        raise ManifestError(f"{path}: malformed manifest ({e!r})") from None
