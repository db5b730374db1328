"""Generate a small dataset from the example config, then resume and split it.

Every image depends only on the config and its (class, index) pair, so a
rerun, a resumed run or a run with more workers produces the same bytes.
"""
import json
import sys
from dataclasses import replace

from _assets import HERE, OUT, ensure_assets
from synthforge.pipeline import generate_dataset, load_config, render_one, split_train_val

ensure_assets()
cfg = load_config(HERE / "example_config.toml")
n = int(sys.argv[1]) if len(sys.argv) > 1 else 12
cfg = replace(cfg, images_per_class=n, output_root=str(OUT / "dataset"))

manifest = generate_dataset(cfg)
report = json.loads((OUT / "dataset" / "run_report.json").read_text())
print(f"{len(manifest.samples)} images, {report['rejected_frames']} rejected frames, "
      f"{report['images_per_second']} images/s")
print("per class:", dict(zip(manifest.classes, manifest.class_counts())))
print("split:", {k: manifest.split.count(k) for k in ("train", "val")})

# a resumed run finds everything done and renders nothing
generate_dataset(cfg, resume=True)
print("resume rendered", json.loads((OUT / "dataset" / "run_report.json").read_text())["rendered_this_run"])

# any single sample can be reproduced in isolation
s = manifest.samples[-1]
again = render_one(cfg, s.class_id, s.index)
assert again.sample == s
print(f"reproduced {s.image_path} (seed {s.seed})")

# a different split seed reshuffles val membership but keeps the per-class count
other = split_train_val(manifest, cfg.val_fraction, seed=123)
print("val per class unchanged:", other.split.count("val") == manifest.split.count("val"))
