"""End-to-end dataset generation: meshes in, annotated images and manifest out.

Every image is a pure function of the generator config and its
(class, index) pair, so runs are reproducible, resumable and independent of
the worker count.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .annotation import AnnotatedSample, DatasetManifest, alpha_mask, save_mask, tight_bbox, write_manifest
from .compositor import BackgroundCorpus, fit_background, composite_over, scan_corpus
from .mesh import load_mesh, normalize_mesh
from .renderer import RenderConfig, Scene, quantize, render
from .sampling import LampSpec, RingSpec, TruncatedNormalSpec, sample_scene

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
PROGRESS_NAME = "progress.jsonl"
REPORT_NAME = "run_report.json"
MAX_ATTEMPTS = 100
_MASK64 = (1 << 64) - 1


class ConfigError(ValueError):
    """Invalid or unreadable generator configuration."""


class SampleFailure(RuntimeError):
    def __init__(self, class_id, index, seed, reason):
        super().__init__(f"class {class_id} index {index} seed {seed}: {reason}")
        self.class_id, self.index, self.seed, self.reason = class_id, index, seed, reason

    def __reduce__(self):
        return (SampleFailure, (self.class_id, self.index, self.seed, self.reason))


@dataclass(frozen=True)
class ClassSpec:
    name: str
    mesh: str
    texture: str | None = None


def default_camera_rings() -> list[RingSpec]:
    radius = TruncatedNormalSpec(2.5, 0.6, 1.2, 4.0)
    return [RingSpec(radius, 0.25, "Y"), RingSpec(radius, 0.25, "Z")]


def default_lamps() -> LampSpec:
    return LampSpec(1, 3, TruncatedNormalSpec(15.0, 7.0, 0.0, math.inf), TruncatedNormalSpec(3.0, 0.5, 2.0, 5.0))


@dataclass(frozen=True)
class GeneratorConfig:
    classes: list[ClassSpec]
    background_root: str
    output_root: str
    images_per_class: int = 100
    render: RenderConfig = field(default_factory=RenderConfig)
    camera_rings: list[RingSpec] = field(default_factory=default_camera_rings)
    lamps: LampSpec = field(default_factory=default_lamps)
    master_seed: int = 0
    val_fraction: float = 0.0
    workers: int = 1
    composite_linear: bool = False
    mask_threshold: float = 0.0
    max_attempts: int = MAX_ATTEMPTS
    save_pose_images: bool = False

    def __post_init__(self):
        if not self.classes:
            raise ConfigError("at least one class is required")
        names = [c.name for c in self.classes]
        if len(set(names)) != len(names):
            raise ConfigError("class names must be unique")
        if len({_slug(n) for n in names}) != len(names):
            raise ConfigError("class names must map to distinct directory names")
        if self.images_per_class < 1:
            raise ConfigError("images_per_class must be >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must lie in [0, 1)")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not self.camera_rings:
            raise ConfigError("at least one camera ring is required")
        if not 0 <= self.master_seed <= _MASK64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")


def config_hash(config: GeneratorConfig) -> str:
    """Digest of everything that affects output bytes (not workers or output_root)."""
    d = asdict(config)
    d.pop("workers")
    d.pop("output_root")
    text = json.dumps(d, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# --- config files --------------------------------------------------------

def _tn(d, where, **fixed) -> TruncatedNormalSpec:
    try:
        params = {"a": -math.inf, "b": math.inf, **d, **fixed}
        return TruncatedNormalSpec(float(params["mu"]), float(params["sigma"]), float(params["a"]), float(params["b"]))
    except KeyError as e:
        raise ConfigError(f"{where}: missing {e.args[0]!r}") from None
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from None


def config_from_dict(doc: dict, base_dir=".") -> GeneratorConfig:
    """Build a config from parsed TOML; relative paths resolve against ``base_dir``."""
    base = Path(base_dir)

    def path(p):
        return str(p if Path(p).is_absolute() else base / p)

    try:
        classes = [
            ClassSpec(c["name"], path(c["mesh"]), path(c["texture"]) if c.get("texture") else None)
            for c in doc["classes"]
        ]
        render_doc = dict(doc.get("render", {}))
        if "fov_y_deg" in render_doc:
            render_doc["fov_y"] = math.radians(render_doc.pop("fov_y_deg"))
        render_cfg = RenderConfig(**render_doc)
        rings = [
            RingSpec(_tn(r["radius"], "camera_rings.radius"), float(r["phi_sigma"]), r.get("normal_axis", "Z"))
            for r in doc.get("camera_rings", [])
        ] or default_camera_rings()
        lamps = default_lamps()
        if "lamps" in doc:
            ld = doc["lamps"]
            lamps = LampSpec(
                int(ld["count_min"]), int(ld["count_max"]),
                _tn(ld["energy"], "lamps.energy", a=0.0, b=math.inf),
                _tn(ld["radius"], "lamps.radius"),
                bool(ld.get("uniform_sphere", False)),
            )
        known = {"classes", "render", "camera_rings", "lamps", "background_root", "output_root"}
        extra = {k: v for k, v in doc.items() if k not in known}
        return GeneratorConfig(
            classes=classes,
            background_root=path(doc["background_root"]),
            output_root=path(doc["output_root"]),
            render=render_cfg,
            camera_rings=rings,
            lamps=lamps,
            **extra,
        )
    except ConfigError:
        raise
    except KeyError as e:
        raise ConfigError(f"missing config key {e.args[0]!r}") from None
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None


def load_config(path) -> GeneratorConfig:
    path = Path(path)
    try:
        with open(path, "rb") as f:
            doc = tomllib.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    return config_from_dict(doc, path.parent)


# --- seeds ---------------------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def derive_seeds(master, class_id, index, attempt) -> np.ndarray:
    """Vectorized :func:`derive_seed` over broadcastable integer arrays."""
    with np.errstate(over="ignore"):
        h = _mix64(np.atleast_1d(np.asarray(master, dtype=np.uint64)) + _GOLDEN)
        for part in (class_id, index, attempt):
            h = _mix64(h ^ _mix64(np.asarray(part, dtype=np.uint64) + _GOLDEN))
    return h


def derive_seed(master: int, class_id: int, index: int, attempt: int = 0) -> int:
    """Stateless 64-bit seed for one (class, index, attempt) task."""
    return int(derive_seeds(master, class_id, index, attempt)[0])


# --- per-sample work -----------------------------------------------------

def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name).strip("_") or "class"


def sample_paths(config: GeneratorConfig, class_id: int, index: int) -> tuple[str, str]:
    slug = _slug(config.classes[class_id].name)
    return f"images/{slug}/{index:06d}.png", f"masks/{slug}/{index:06d}.png"


class Workspace:
    """Meshes, BVHs and the background corpus, loaded once per process."""

    def __init__(self, config: GeneratorConfig):
        self.config = config
        self.corpus: BackgroundCorpus = scan_corpus(config.background_root)
        self.scenes = []
        for c in config.classes:
            mesh = normalize_mesh(load_mesh(c.mesh, c.texture))
            self.scenes.append(Scene(mesh))
            log.info("class %s: %d triangles", c.name, mesh.n_triangles)


@dataclass
class SampleResult:
    sample: AnnotatedSample
    image: np.ndarray  # (H, W, 3) uint8
    mask: np.ndarray
    pose: np.ndarray  # (H, W, 4) uint8
    attempts: int


def render_sample(ws: Workspace, class_id: int, index: int) -> SampleResult:
    """Draw, render, composite and annotate one (class, index) image.

    Frames where the object misses the image are redrawn with the next
    attempt's seed, up to ``max_attempts``.
    """
    cfg = ws.config
    rc = cfg.render
    for attempt in range(cfg.max_attempts):
        seed = derive_seed(cfg.master_seed, class_id, index, attempt)
        scene = sample_scene(cfg.camera_rings, cfg.lamps, len(ws.corpus), seed)
        pose = render(ws.scenes[class_id], scene, rc)
        mask = alpha_mask(pose, cfg.mask_threshold)
        bbox = tight_bbox(mask)
        if bbox is None:
            continue
        bg = fit_background(ws.corpus.load(scene.background_id), rc.width, rc.height)
        image = quantize(composite_over(pose, bg, linear=cfg.composite_linear, gamma=rc.gamma))
        image_path, mask_path = sample_paths(cfg, class_id, index)
        sample = AnnotatedSample(
            image_path=image_path,
            mask_path=mask_path,
            class_id=class_id,
            class_name=cfg.classes[class_id].name,
            bbox=bbox,
            scene=scene,
            seed=seed,
            width=rc.width,
            height=rc.height,
            index=index,
        )
        return SampleResult(sample, image, mask, pose.to_uint8(), attempt + 1)
    raise SampleFailure(class_id, index, seed, f"object out of frame in all {cfg.max_attempts} attempts")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def persist_sample(result: SampleResult, root: Path, save_pose: bool = False) -> dict:
    """Write image and mask; returns the progress record with checksums."""
    s = result.sample
    img_path, mask_path = root / s.image_path, root / s.mask_path
    img_path.parent.mkdir(parents=True, exist_ok=True)
    mask_path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(result.image, mode="RGB").save(img_path, format="PNG")
    save_mask(result.mask, mask_path)
    if save_pose:
        pose_path = root / s.image_path.replace("images/", "poses/", 1)
        pose_path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(result.pose, mode="RGBA").save(pose_path, format="PNG")
    return {
        "sample": s.to_dict(),
        "attempts": result.attempts,
        "sha256_image": _sha256(img_path),
        "sha256_mask": _sha256(mask_path),
    }


_WORKSPACE: Workspace | None = None


def _init_worker(config: GeneratorConfig) -> None:
    global _WORKSPACE
    _WORKSPACE = Workspace(config)


def _run_task(task) -> dict:
    class_id, index = task
    ws = _WORKSPACE
    try:
        result = render_sample(ws, class_id, index)
        return persist_sample(result, Path(ws.config.output_root), ws.config.save_pose_images)
    except SampleFailure:
        raise
    except Exception as e:
        seed = derive_seed(ws.config.master_seed, class_id, index, 0)
        raise SampleFailure(class_id, index, seed, repr(e)) from e


# --- orchestration -------------------------------------------------------

def _load_progress(root: Path, digest: str) -> dict:
    """Completed (class_id, index) -> record, keeping only entries whose files verify."""
    path = root / PROGRESS_NAME
    done = {}
    if not path.exists():
        return done
    lines = path.read_text().splitlines()
    if not lines:
        return done
    header = json.loads(lines[0])
    if header.get("generator_config_hash") != digest:
        raise ConfigError(f"{path}: written by a different configuration; cannot resume")
    for line in lines[1:]:
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            # torn final line from an interrupted run
            continue
        s = rec["sample"]
        img, mask = root / s["image_path"], root / s["mask_path"]
        if img.exists() and mask.exists() and _sha256(img) == rec["sha256_image"] and _sha256(mask) == rec["sha256_mask"]:
            done[(s["class_id"], s["index"])] = rec
    return done


def generate_dataset(config: GeneratorConfig, workers: int | None = None, resume: bool = False) -> DatasetManifest:
    """Generate ``images_per_class`` images per class under ``output_root``.

    Writes images, masks, ``manifest.json`` (with a train/val split when
    ``val_fraction > 0``) and a ``run_report.json`` with timings and
    rejection counts. Raises :class:`SampleFailure` naming the offending
    (class, index, seed) on any per-image failure.
    """
    workers = workers or config.workers
    root = Path(config.output_root)
    root.mkdir(parents=True, exist_ok=True)
    digest = config_hash(config)
    t0 = time.perf_counter()

    done = _load_progress(root, digest) if resume else {}
    tasks = [
        (c, i)
        for c in range(len(config.classes))
        for i in range(config.images_per_class)
        if (c, i) not in done
    ]
    log.info("%d tasks (%d already complete), %d workers", len(tasks), len(done), workers)

    progress_path = root / PROGRESS_NAME
    # rewrite the log from verified entries so stale lines never survive
    with open(progress_path, "w") as f:
        f.write(json.dumps({"generator_config_hash": digest}) + "\n")
        for rec in done.values():
            f.write(json.dumps(rec) + "\n")

    records = dict(done)
    if tasks:
        # the parent validates inputs up front so config errors surface before any work
        if workers == 1:
            _init_worker(config)
            results = map(_run_task, tasks)
            pool = None
        else:
            Workspace(config)
            pool = ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(config,))
            results = pool.map(_run_task, tasks, chunksize=max(1, min(8, len(tasks) // (4 * workers))))
        try:
            with open(progress_path, "a") as f:
                for rec in results:
                    s = rec["sample"]
                    records[(s["class_id"], s["index"])] = rec
                    f.write(json.dumps(rec) + "\n")
                    f.flush()
        finally:
            if pool is not None:
                pool.shutdown(cancel_futures=True)

    ordered = [records[k] for k in sorted(records)]
    manifest = DatasetManifest(
        classes=[c.name for c in config.classes],
        samples=[AnnotatedSample.from_dict(r["sample"]) for r in ordered],
        generator_config_hash=digest,
    )
    if config.val_fraction > 0:
        manifest = split_train_val(manifest, config.val_fraction, config.master_seed)
    write_manifest(manifest, root / MANIFEST_NAME)

    elapsed = time.perf_counter() - t0
    rejections = sum(r["attempts"] - 1 for r in ordered)
    report = {
        "images": len(ordered),
        "rendered_this_run": len(tasks),
        "resumed": len(done),
        "rejected_frames": rejections,
        "workers": workers,
        "seconds": round(elapsed, 3),
        "images_per_second": round(len(tasks) / elapsed, 3) if elapsed > 0 else None,
    }
    (root / REPORT_NAME).write_text(json.dumps(report, indent=1) + "\n")
    log.info("generated %d images in %.1fs (%d rejected frames)", len(tasks), elapsed, rejections)
    return manifest


def render_one(config: GeneratorConfig, class_id: int, index: int) -> SampleResult:
    """Reproduce a single sample in isolation, byte-identical to a full run."""
    if not 0 <= class_id < len(config.classes):
        raise ConfigError(f"class id {class_id} outside [0, {len(config.classes)})")
    return render_sample(Workspace(config), class_id, index)


def split_train_val(manifest: DatasetManifest, val_fraction: float, seed: int) -> DatasetManifest:
    """Stratified split: round-half-up(val_fraction * n_c) random samples of each class go to val."""
    if not 0.0 <= val_fraction < 1.0:
        raise ValueError(f"val_fraction must lie in [0, 1), got {val_fraction}")
    rng = np.random.default_rng(seed & _MASK64)
    labels = ["train"] * len(manifest.samples)
    for c in range(len(manifest.classes)):
        members = [i for i, s in enumerate(manifest.samples) if s.class_id == c]
        n_val = math.floor(val_fraction * len(members) + 0.5)
        for j in rng.permutation(len(members))[:n_val]:
            labels[members[j]] = "val"
    return replace(manifest, split=labels)
