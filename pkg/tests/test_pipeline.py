import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from PIL import Image
from scipy import stats

from synthforge.annotation import load_mask, read_manifest, tight_bbox
from synthforge.pipeline import (
    PROGRESS_NAME, REPORT_NAME, ClassSpec, ConfigError, SampleFailure, config_from_dict, config_hash,
    derive_seed, derive_seeds, generate_dataset, load_config, render_one, split_train_val, tomllib,
)
from synthforge.renderer import RenderConfig
from synthforge.sampling import RingSpec, TruncatedNormalSpec


def tree_bytes(root):
    """Relative path -> bytes for every output file except the timing report."""
    root = Path(root)
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file() and p.name != REPORT_NAME}


def far_rings(mu=300.0):
    # the object shrinks below a pixel at these distances, so some frames miss it
    return [RingSpec(TruncatedNormalSpec(mu, 150.0, 20.0, 2000.0), 0.25, "Z")]


# ---- seeds ----------------------------------------------------------------

def test_derive_seed_stateless():
    assert derive_seed(5, 1, 2, 3) == derive_seed(5, 1, 2, 3)
    assert derive_seed(5, 0, 0, 0) != derive_seed(5, 0, 1, 0)
    assert derive_seed(5, 0, 0, 0) != derive_seed(6, 0, 0, 0)
    assert 0 <= derive_seed(2**64 - 1, 9, 9, 9) < 2**64
    assert derive_seeds(5, [1, 1], [2, 3], 0)[0] == derive_seed(5, 1, 2)


@pytest.fixture(scope="module")
def million_seeds():
    c, i, a = np.meshgrid(np.arange(10), np.arange(10_000), np.arange(10), indexing="ij")
    return derive_seeds(12345, c.ravel(), i.ravel(), a.ravel())


def test_derive_seed_no_collisions(million_seeds):
    assert million_seeds.size == 10**6
    assert np.unique(million_seeds).size == 10**6


def test_derive_seed_top_byte_uniform(million_seeds):
    counts = np.bincount((million_seeds >> np.uint64(56)).astype(np.int64), minlength=256)
    assert stats.chisquare(counts).pvalue > 0.01


# ---- split ----------------------------------------------------------------

def _manifest(n_per_class, n_classes=3):
    from synthforge.annotation import AnnotatedSample, BoundingBox, DatasetManifest
    from synthforge.sampling import SceneSample

    scene = SceneSample((0.0, 0.0, 2.0), (0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (), 0, 0)
    classes = [f"c{k}" for k in range(n_classes)]
    samples = [AnnotatedSample(f"images/c{c}/{i:06d}.png", f"masks/c{c}/{i:06d}.png", c, classes[c],
                               BoundingBox(0, 0, 1, 1), scene, 0, 4, 4, i)
               for c in range(n_classes) for i in range(n_per_class)]
    return DatasetManifest(classes, samples)


def test_split_zero_fraction_all_train():
    m = split_train_val(_manifest(5), 0.0, 1)
    assert m.split == ["train"] * 15


def test_split_exact_counts():
    m = split_train_val(_manifest(100), 0.1, 42)
    for c in range(3):
        labels = [lab for lab, s in zip(m.split, m.samples) if s.class_id == c]
        assert labels.count("val") == 10


@pytest.mark.parametrize("n,f,want", [(5, 0.1, 1), (5, 0.3, 2), (4, 0.125, 1), (3, 0.5, 2), (7, 0.99, 7)])
def test_split_rounds_half_up(n, f, want):
    m = split_train_val(_manifest(n, 1), f, 0)
    assert m.split.count("val") == want


def test_split_deterministic_and_seed_dependent():
    a = split_train_val(_manifest(50), 0.3, 7)
    b = split_train_val(_manifest(50), 0.3, 7)
    c = split_train_val(_manifest(50), 0.3, 8)
    assert a.split == b.split and a.split != c.split
    a.validate()


@pytest.mark.parametrize("f", [-0.1, 1.0, 1.5])
def test_split_rejects_fraction(f):
    with pytest.raises(ValueError):
        split_train_val(_manifest(3), f, 0)


# ---- config ---------------------------------------------------------------

def test_config_validation(make_config):
    with pytest.raises(ConfigError):
        make_config(classes=[])
    with pytest.raises(ConfigError):
        make_config(images_per_class=0)
    with pytest.raises(ConfigError):
        make_config(val_fraction=1.0)
    with pytest.raises(ConfigError, match="unique"):
        make_config(classes=[ClassSpec("a", "x.obj"), ClassSpec("a", "y.obj")])
    with pytest.raises(ConfigError, match="distinct directory"):
        make_config(classes=[ClassSpec("a b", "x.obj"), ClassSpec("a/b", "y.obj")])


def test_config_hash_ignores_workers_and_output(make_config):
    base = make_config()
    assert config_hash(base) == config_hash(replace(base, workers=4, output_root="/elsewhere"))
    assert config_hash(base) != config_hash(replace(base, master_seed=1))
    assert config_hash(base) != config_hash(replace(base, render=RenderConfig(48, 48, 8)))


TOML = """
background_root = "backgrounds"
output_root = "run"
images_per_class = 7
master_seed = 99
val_fraction = 0.2
workers = 2

[render]
width = 64
height = 48
samples_per_pixel = 4
fov_y_deg = 35.0

[[classes]]
name = "pot"
mesh = "meshes/pot.obj"

[[classes]]
name = "carton"
mesh = "meshes/carton.obj"
texture = "meshes/carton.png"

[[camera_rings]]
normal_axis = "X"
phi_sigma = 0.3
radius = { mu = 2.0, sigma = 0.4, a = 1.0, b = 3.0 }

[lamps]
count_min = 2
count_max = 4
energy = { mu = 10.0, sigma = 3.0 }
radius = { mu = 3.0, sigma = 0.5, a = 2.0, b = 5.0 }
"""


def test_load_toml_config(tmp_path):
    path = tmp_path / "gen.toml"
    path.write_text(TOML)
    cfg = load_config(path)
    assert cfg.images_per_class == 7 and cfg.master_seed == 99 and cfg.workers == 2
    assert cfg.output_root == str(tmp_path / "run")
    assert cfg.classes[0] == ClassSpec("pot", str(tmp_path / "meshes/pot.obj"), None)
    assert cfg.classes[1].texture == str(tmp_path / "meshes/carton.png")
    assert cfg.render.width == 64 and cfg.render.fov_y == pytest.approx(math.radians(35))
    assert cfg.camera_rings == [RingSpec(TruncatedNormalSpec(2.0, 0.4, 1.0, 3.0), 0.3, "X")]
    assert cfg.lamps.energy_dist == TruncatedNormalSpec(10.0, 3.0, 0.0, math.inf)
    assert (cfg.lamps.count_min, cfg.lamps.count_max) == (2, 4)


@pytest.mark.parametrize("edit,msg", [
    (lambda d: d.pop("classes"), "classes"),
    (lambda d: d["render"].update(samples_per_pixel=0), "samples_per_pixel"),
    (lambda d: d.update(bogus_key=1), "bogus_key"),
    (lambda d: d["lamps"]["energy"].pop("sigma"), "sigma"),
])
def test_config_errors(edit, msg):
    doc = tomllib.loads(TOML)
    edit(doc)
    with pytest.raises(ConfigError, match=msg):
        config_from_dict(doc)


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.toml")
    (tmp_path / "bad.toml").write_text("images_per_class = = 3")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.toml")


# ---- generation -----------------------------------------------------------

def test_small_dataset(make_config):
    cfg = make_config()
    m = generate_dataset(cfg)
    assert len(m.samples) == 6 and m.classes == ["pot", "carton"]
    assert m.class_counts() == [3, 3]
    root = Path(cfg.output_root)
    assert read_manifest(root / "manifest.json") == m
    for s in m.samples:
        img = np.asarray(Image.open(root / s.image_path))
        assert img.shape == (48, 48, 3)
        mask = load_mask(root / s.mask_path)
        assert mask.any() and tight_bbox(mask) == s.bbox
        assert s.bbox.within(48, 48)
    report = json.loads((root / REPORT_NAME).read_text())
    assert report["images"] == 6 and report["rendered_this_run"] == 6


def test_generation_deterministic(make_config):
    a, b = make_config("a"), make_config("b")
    generate_dataset(a)
    generate_dataset(b)
    assert tree_bytes(a.output_root) == tree_bytes(b.output_root)
    c = make_config("c", master_seed=2025)
    generate_dataset(c)
    assert tree_bytes(c.output_root) != tree_bytes(a.output_root)


def test_worker_count_independent(make_config):
    one, two = make_config("one", images_per_class=4), make_config("two", images_per_class=4)
    generate_dataset(one, workers=1)
    generate_dataset(two, workers=2)
    assert tree_bytes(one.output_root) == tree_bytes(two.output_root)


def test_render_one_reproduces_sample(make_config):
    cfg = make_config()
    m = generate_dataset(cfg)
    s = m.samples[4]
    r = render_one(cfg, s.class_id, s.index)
    assert r.sample == s
    on_disk = np.asarray(Image.open(Path(cfg.output_root) / s.image_path))
    np.testing.assert_array_equal(r.image, on_disk)
    with pytest.raises(ConfigError):
        render_one(cfg, 5, 0)


def test_split_in_generation(make_config):
    cfg = make_config(images_per_class=5, val_fraction=0.4)
    m = generate_dataset(cfg)
    assert m.split.count("val") == 4
    assert read_manifest(Path(cfg.output_root) / "manifest.json").split == m.split


def test_resume_skips_verified_samples(make_config):
    cfg = make_config("r")
    generate_dataset(cfg)
    reference = tree_bytes(cfg.output_root)
    root = Path(cfg.output_root)
    (root / "images/pot/000001.png").unlink()
    (root / "masks/carton/000002.png").write_bytes(b"corrupt")
    m = generate_dataset(cfg, resume=True)
    report = json.loads((root / REPORT_NAME).read_text())
    assert report["rendered_this_run"] == 2 and report["resumed"] == 4
    assert len(m.samples) == 6
    # progress lines may be reordered by the resume; everything else is identical
    after = tree_bytes(root)
    assert after.pop(PROGRESS_NAME) and reference.pop(PROGRESS_NAME)
    assert after == reference


def test_resume_survives_torn_progress_line(make_config):
    cfg = make_config("t")
    generate_dataset(cfg)
    progress = Path(cfg.output_root) / PROGRESS_NAME
    lines = progress.read_text().splitlines()
    progress.write_text("\n".join(lines[:-1]) + "\n" + lines[-1][:20])
    generate_dataset(cfg, resume=True)
    report = json.loads((Path(cfg.output_root) / REPORT_NAME).read_text())
    assert report["rendered_this_run"] == 1


def test_resume_refuses_other_config(make_config):
    generate_dataset(make_config("x"))
    with pytest.raises(ConfigError, match="different configuration"):
        generate_dataset(make_config("x", master_seed=1), resume=True)


def test_rejected_frames_are_redrawn(make_config):
    cfg = make_config("far", camera_rings=far_rings(), images_per_class=4)
    m = generate_dataset(cfg)
    report = json.loads((Path(cfg.output_root) / REPORT_NAME).read_text())
    assert report["rejected_frames"] > 0
    for s in m.samples:
        mask = load_mask(Path(cfg.output_root) / s.mask_path)
        assert mask.any() and s.bbox.within(48, 48) and tight_bbox(mask) == s.bbox
        assert s.seed == s.scene.rng_seed


def test_hard_failure_names_sample(make_config):
    cfg = make_config("never", camera_rings=far_rings(1e6), max_attempts=2)
    with pytest.raises(SampleFailure, match=r"class 0 index 0 seed \d+") as exc:
        generate_dataset(cfg)
    assert exc.value.seed == derive_seed(cfg.master_seed, 0, 0, 1)


def test_missing_inputs_fail_fast(make_config, tmp_path):
    from synthforge.compositor import CorpusError
    from synthforge.mesh import MeshError

    with pytest.raises(CorpusError):
        generate_dataset(make_config("nb", background_root=str(tmp_path / "none")))
    with pytest.raises(MeshError):
        generate_dataset(make_config("nm", classes=[ClassSpec("x", str(tmp_path / "none.obj"))]))


def test_pose_images_saved_on_request(make_config):
    cfg = make_config("pose", images_per_class=1, save_pose_images=True)
    m = generate_dataset(cfg)
    pose = Image.open(Path(cfg.output_root) / m.samples[0].image_path.replace("images/", "poses/"))
    assert pose.mode == "RGBA"
    alpha = np.asarray(pose)[..., 3]
    np.testing.assert_array_equal(alpha > 0, load_mask(Path(cfg.output_root) / m.samples[0].mask_path))
