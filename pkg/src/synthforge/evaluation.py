"""Scoring externally produced predictions against a dataset manifest.

Predictions are JSON lines, one image per line::

    {"image_id": "images/cola/000003.png",
     "detections": [{"class_id": 2, "confidence": 0.91, "bbox": [x, y, w, h]}, ...]}

``bbox`` is optional and uses the manifest's COCO convention. Entries are
ranked by descending confidence, ties broken by ascending class id.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .annotation import BoundingBox, DatasetManifest


class Detection(NamedTuple):
    class_id: int
    confidence: float
    bbox: BoundingBox | None = None


@dataclass
class PredictionRecord:
    image_id: str
    entries: list[Detection] = field(default_factory=list)

    def validate(self, num_classes: int | None = None) -> None:
        for e in self.entries:
            if not 0.0 <= e.confidence <= 1.0:
                raise ValueError(f"{self.image_id}: confidence {e.confidence} outside [0, 1]")
            if e.class_id < 0 or (num_classes is not None and e.class_id >= num_classes):
                raise ValueError(f"{self.image_id}: unknown class id {e.class_id}")

    def ranked(self) -> list[Detection]:
        return sorted(self.entries, key=lambda e: (-e.confidence, e.class_id))

    def top_classes(self, k: int) -> list[int]:
        return [e.class_id for e in self.ranked()[:k]]


def _index(predictions: Sequence[PredictionRecord]) -> dict[str, PredictionRecord]:
    out = {}
    for p in predictions:
        if p.image_id in out:
            raise ValueError(f"duplicate prediction record for {p.image_id}")
        out[p.image_id] = p
    return out


def dac_counts(predictions: Sequence[PredictionRecord], truth: Mapping[str, int], k: int = 3) -> tuple[int, int, int]:
    """(true positives, images scored, images with no prediction record)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not truth:
        raise ValueError("empty truth set")
    by_id = _index(predictions)
    tp = missing = 0
    for image_id, cls in truth.items():
        rec = by_id.get(image_id)
        if rec is None:
            missing += 1
            continue
        if cls in rec.top_classes(k):
            tp += 1
    return tp, len(truth), missing


def dac_accuracy(predictions: Sequence[PredictionRecord], truth: Mapping[str, int], k: int = 3) -> float:
    """Fraction of images whose k best-ranked detections include the true class.

    Images without a prediction record count as misses.
    """
    tp, n, _ = dac_counts(predictions, truth, k)
    return tp / n


def top1(predictions: Sequence[PredictionRecord]) -> dict[str, int]:
    return {p.image_id: p.ranked()[0].class_id for p in predictions if p.entries}


def confusion_matrix(predicted: Mapping[str, int], truth: Mapping[str, int], num_classes: int) -> np.ndarray:
    """Counts C[i, j] of truth-i images predicted as j; unpredicted images are skipped."""
    c = np.zeros((num_classes, num_classes), dtype=np.int64)
    for image_id, t in truth.items():
        if image_id not in predicted:
            continue
        p = predicted[image_id]
        if not (0 <= t < num_classes and 0 <= p < num_classes):
            raise ValueError(f"{image_id}: class id outside [0, {num_classes})")
        c[t, p] += 1
    return c


@dataclass
class PrecisionRecall:
    precision: np.ndarray
    recall: np.ndarray
    macro_precision: float
    macro_recall: float
    accuracy: float
    # classes whose precision (no predictions) or recall (no truth) is undefined
    undefined_precision: list[int]
    undefined_recall: list[int]


def precision_recall(confusion) -> PrecisionRecall:
    c = np.asarray(confusion)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError("confusion matrix must be square")
    if np.any(c < 0):
        raise ValueError("confusion matrix must be non-negative")
    total = c.sum()
    if total == 0:
        raise ValueError("confusion matrix is all zero")
    diag = np.diag(c).astype(float)
    cols, rows = c.sum(axis=0), c.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(cols > 0, diag / cols, np.nan)
        recall = np.where(rows > 0, diag / rows, np.nan)
    return PrecisionRecall(
        precision=precision,
        recall=recall,
        macro_precision=float(np.nanmean(precision)) if np.any(cols > 0) else math.nan,
        macro_recall=float(np.nanmean(recall)) if np.any(rows > 0) else math.nan,
        accuracy=float(diag.sum() / total),
        undefined_precision=[int(i) for i in np.flatnonzero(cols == 0)],
        undefined_recall=[int(i) for i in np.flatnonzero(rows == 0)],
    )


@dataclass
class EvalReport:
    classes: list[str]
    accuracy: float
    per_class_precision: np.ndarray
    per_class_recall: np.ndarray
    macro_precision: float
    macro_recall: float
    confusion: np.ndarray
    dac: float | None
    dac_k: int
    num_images: int
    missing_predictions: int
    undefined_precision: list[int]
    undefined_recall: list[int]
    mean_iou_top1: float | None = None
    iou_count: int = 0

    def to_dict(self) -> dict:
        def clean(v):
            return None if v is None or (isinstance(v, float) and math.isnan(v)) else v

        return {
            "classes": self.classes,
            "num_images": self.num_images,
            "missing_predictions": self.missing_predictions,
            "dac_k": self.dac_k,
            "dac": clean(self.dac),
            "accuracy": clean(self.accuracy),
            "macro_precision": clean(self.macro_precision),
            "macro_recall": clean(self.macro_recall),
            "per_class_precision": [clean(float(x)) for x in self.per_class_precision],
            "per_class_recall": [clean(float(x)) for x in self.per_class_recall],
            "undefined_precision": self.undefined_precision,
            "undefined_recall": self.undefined_recall,
            "confusion": self.confusion.tolist(),
            "mean_iou_top1": clean(self.mean_iou_top1),
            "iou_count": self.iou_count,
        }


def evaluate(manifest: DatasetManifest, predictions: Sequence[PredictionRecord], k: int = 3,
             split: str | None = None) -> EvalReport:
    truth = manifest.truth(split)
    n_cls = len(manifest.classes)
    for p in predictions:
        p.validate(n_cls)
    tp, n, missing = dac_counts(predictions, truth, k)
    first = top1(predictions)
    conf = confusion_matrix(first, truth, n_cls)
    pr = precision_recall(conf) if conf.sum() else None

    boxes = {s.image_id: s.bbox for s in manifest.samples}
    ious = []
    for p in predictions:
        if p.image_id in truth and p.entries:
            best = p.ranked()[0]
            if best.bbox is not None:
                ious.append(best.bbox.iou(boxes[p.image_id]))

    nan_vec = np.full(n_cls, np.nan)
    return EvalReport(
        classes=list(manifest.classes),
        accuracy=pr.accuracy if pr else math.nan,
        per_class_precision=pr.precision if pr else nan_vec,
        per_class_recall=pr.recall if pr else nan_vec,
        macro_precision=pr.macro_precision if pr else math.nan,
        macro_recall=pr.macro_recall if pr else math.nan,
        confusion=conf,
        dac=tp / n,
        dac_k=k,
        num_images=n,
        missing_predictions=missing,
        undefined_precision=pr.undefined_precision if pr else list(range(n_cls)),
        undefined_recall=pr.undefined_recall if pr else list(range(n_cls)),
        mean_iou_top1=float(np.mean(ious)) if ious else None,
        iou_count=len(ious),
    )


def parse_prediction(doc: dict) -> PredictionRecord:
    entries = []
    for d in doc.get("detections", []):
        bbox = BoundingBox.from_coco(d["bbox"]) if d.get("bbox") is not None else None
        entries.append(Detection(int(d["class_id"]), float(d["confidence"]), bbox))
    return PredictionRecord(str(doc["image_id"]), entries)


def read_predictions(path) -> list[PredictionRecord]:
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(parse_prediction(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ValueError(f"{path}:{lineno}: bad prediction record ({e})") from None
    return records


def write_predictions(records: Sequence[PredictionRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            dets = [
                {"class_id": e.class_id, "confidence": e.confidence,
                 **({"bbox": e.bbox.to_coco()} if e.bbox is not None else {})}
                for e in r.entries
            ]
            f.write(json.dumps({"image_id": r.image_id, "detections": dets}) + "\n")


def write_report(report: EvalReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=1) + "\n")
