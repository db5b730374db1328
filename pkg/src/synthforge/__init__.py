"""Synthetic annotated image datasets from textured 3D scans.

Scene parameters are drawn from camera-ring and point-lamp distributions,
the mesh is ray-traced to a straight-alpha pose image, composited over a
random background, and labeled automatically from its alpha channel.
"""
from .annotation import (
    AnnotatedSample,
    BoundingBox,
    DatasetManifest,
    alpha_mask,
    read_manifest,
    tight_bbox,
    write_manifest,
)
from .compositor import BackgroundCorpus, composite_over, fit_background, scan_corpus
from .evaluation import (
    Detection,
    EvalReport,
    PredictionRecord,
    confusion_matrix,
    dac_accuracy,
    evaluate,
    precision_recall,
)
from .mesh import Aabb, Bvh, MeshError, TexturedMesh, build_bvh, load_mesh, normalize_mesh
from .pipeline import (
    ClassSpec,
    ConfigError,
    GeneratorConfig,
    derive_seed,
    generate_dataset,
    load_config,
    render_one,
    split_train_val,
)
from .renderer import Hit, RenderConfig, RgbaImage, Scene, intersect, render, shade
from .sampling import (
    Lamp,
    LampSpec,
    RingSpec,
    SceneSample,
    TruncatedNormalSpec,
    rotate_about_y,
    sample_lamps,
    sample_ring_location,
    sample_scene,
    spherical_to_cartesian,
    truncnorm_sample,
)

__version__ = "0.1.0"
