"""Score a detector's output against a generated manifest.

The predictions here are simulated from the ground truth: the true class is
ranked first most of the time, sometimes second or third, occasionally
missing. Real detector output in the same JSON-lines format works the same.
"""
import numpy as np

from _assets import OUT
from synthforge.annotation import BoundingBox, read_manifest
from synthforge.evaluation import Detection, PredictionRecord, evaluate, write_predictions, write_report

manifest = read_manifest(OUT / "dataset" / "manifest.json")  # run 04_generate_dataset.py first
rng = np.random.default_rng(1)
n_cls = len(manifest.classes)

records = []
for s in manifest.samples:
    if rng.random() < 0.05:
        continue  # no detection at all for this image
    conf = rng.dirichlet(np.ones(n_cls))
    order = np.argsort(-conf)
    rank = rng.choice(3, p=[0.7, 0.2, 0.1])
    # move the true class to the drawn rank
    order = [c for c in order if c != s.class_id]
    order.insert(min(rank, n_cls - 1), s.class_id)
    sorted_conf = np.sort(conf)[::-1]
    b = s.bbox
    jittered = BoundingBox(max(b.x_min - 2, 0), b.y_min, b.x_max, min(b.y_max + 2, s.height - 1))
    dets = [Detection(int(c), float(p), jittered if i == 0 else None) for i, (c, p) in enumerate(zip(order, sorted_conf))]
    records.append(PredictionRecord(s.image_id, dets))
write_predictions(records, OUT / "predictions.jsonl")

for k in (1, 2, 3):
    print(f"DAC@{k} = {evaluate(manifest, records, k=k).dac:.3f}")
report = evaluate(manifest, records, k=3)
print("confusion (rows truth, cols top-1):")
print(report.confusion)
print(f"accuracy {report.accuracy:.3f}, macro precision {report.macro_precision:.3f}, "
      f"macro recall {report.macro_recall:.3f}, missing {report.missing_predictions}")
print(f"mean IoU of top-1 boxes (diagnostic only): {report.mean_iou_top1:.3f}")
write_report(report, OUT / "eval_report.json")
