"""Command-line entry point: generate, split, inspect, render-one, evaluate.

Exit codes: 0 success, 1 configuration error, 2 runtime I/O error.
Set ``SYNTHFORGE_LOG`` (DEBUG, INFO, WARNING, ...) for log verbosity.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .annotation import ManifestError, read_manifest, save_mask, write_manifest
from .compositor import CorpusError
from .evaluation import evaluate, read_predictions, write_report
from .mesh import MeshError
from .pipeline import ConfigError, SampleFailure, generate_dataset, load_config, render_one, split_train_val

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2

log = logging.getLogger("synthforge")


def _cmd_generate(args) -> int:
    config = load_config(args.config)
    manifest = generate_dataset(config, workers=args.workers, resume=args.resume)
    print(f"{len(manifest.samples)} samples written to {config.output_root}")
    return EXIT_OK


def _cmd_split(args) -> int:
    manifest = read_manifest(args.manifest)
    manifest = split_train_val(manifest, args.val_fraction, args.seed)
    write_manifest(manifest, args.output or args.manifest)
    n_val = manifest.split.count("val")
    print(f"train {len(manifest.samples) - n_val}, val {n_val}")
    return EXIT_OK


def _cmd_inspect(args) -> int:
    m = read_manifest(args.manifest)
    print(f"manifest {args.manifest}: {len(m.samples)} samples, {len(m.classes)} classes, config {m.generator_config_hash}")
    counts = m.class_counts()
    for cid, name in enumerate(m.classes):
        line = f"  [{cid}] {name}: {counts[cid]}"
        if m.split is not None:
            n_val = sum(1 for s, lab in zip(m.samples, m.split) if s.class_id == cid and lab == "val")
            line += f" (val {n_val})"
        print(line)
    if m.samples:
        w = np.array([s.bbox.width for s in m.samples])
        h = np.array([s.bbox.height for s in m.samples])
        frac = np.array([s.bbox.area / (s.width * s.height) for s in m.samples])
        print(f"  bbox width  min {w.min()} mean {w.mean():.1f} max {w.max()}")
        print(f"  bbox height min {h.min()} mean {h.mean():.1f} max {h.max()}")
        print(f"  bbox area / image area: mean {frac.mean():.3f}")
    return EXIT_OK


def _resolve_class(config, token: str) -> int:
    names = [c.name for c in config.classes]
    if token in names:
        return names.index(token)
    try:
        return int(token)
    except ValueError:
        raise ConfigError(f"unknown class {token!r}; choose from {names}") from None


def _cmd_render_one(args) -> int:
    config = load_config(args.config)
    cid = _resolve_class(config, args.class_)
    result = render_one(config, cid, args.index)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{Path(result.sample.image_path).parent.name}_{args.index:06d}"
    Image.fromarray(result.image, mode="RGB").save(out / f"{stem}.png")
    Image.fromarray(result.pose, mode="RGBA").save(out / f"{stem}_pose.png")
    save_mask(result.mask, out / f"{stem}_mask.png")
    print(json.dumps({**result.sample.to_dict(), "attempts": result.attempts}, indent=1))
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    manifest = read_manifest(args.manifest)
    preds = read_predictions(args.predictions)
    report = evaluate(manifest, preds, k=args.dac_k, split=args.split)
    d = report.to_dict()
    print(f"images {d['num_images']} (missing predictions {d['missing_predictions']})")
    print(f"DAC@{args.dac_k} {d['dac']}")
    print(f"accuracy {d['accuracy']}  macro precision {d['macro_precision']}  macro recall {d['macro_recall']}")
    if args.report:
        write_report(report, args.report)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="synthforge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="render a dataset from a TOML config")
    g.add_argument("--config", required=True)
    g.add_argument("--workers", type=int, default=None)
    g.add_argument("--resume", action="store_true", help="skip samples already completed and verified")
    g.set_defaults(func=_cmd_generate)

    s = sub.add_parser("split", help="assign a stratified train/val split to a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--val-fraction", type=float, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--output", help="write here instead of overwriting the manifest")
    s.set_defaults(func=_cmd_split)

    i = sub.add_parser("inspect", help="print class counts and bounding-box statistics")
    i.add_argument("--manifest", required=True)
    i.set_defaults(func=_cmd_inspect)

    r = sub.add_parser("render-one", help="reproduce a single sample for debugging")
    r.add_argument("--config", required=True)
    r.add_argument("--class", dest="class_", required=True, help="class name or id")
    r.add_argument("--index", type=int, required=True)
    r.add_argument("--out", default=".")
    r.set_defaults(func=_cmd_render_one)

    e = sub.add_parser("evaluate", help="score a predictions file against a manifest")
    e.add_argument("--manifest", required=True)
    e.add_argument("--predictions", required=True)
    e.add_argument("--dac-k", type=int, default=3)
    e.add_argument("--split", choices=["train", "val"], default=None)
    e.add_argument("--report")
    e.set_defaults(func=_cmd_evaluate)
    return p


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("SYNTHFORGE_LOG", "WARNING").upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MeshError, CorpusError, ManifestError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, SampleFailure) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
