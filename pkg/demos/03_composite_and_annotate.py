"""Paste a pose image over a background and read the labels off its alpha.

Because the renderer knows where the product is, the mask and bounding box
come for free: no manual annotation.
"""
import numpy as np
from PIL import Image, ImageDraw

from _assets import OUT, ensure_assets
from synthforge.annotation import alpha_mask, save_mask, tight_bbox
from synthforge.compositor import composite_over, fit_background, scan_corpus
from synthforge.mesh import load_mesh, normalize_mesh
from synthforge.pipeline import default_camera_rings, default_lamps
from synthforge.renderer import RenderConfig, Scene, quantize, render
from synthforge.sampling import sample_scene

assets = ensure_assets()
corpus = scan_corpus(assets / "backgrounds")
scene = Scene(normalize_mesh(load_mesh(assets / "meshes" / "carton.obj")))
cfg = RenderConfig(300, 300, 16)

s = sample_scene(default_camera_rings(), default_lamps(), len(corpus), seed=11)
pose = render(scene, s, cfg)
bg = fit_background(corpus.load(s.background_id), cfg.width, cfg.height)
final = quantize(composite_over(pose, bg))
print(f"background #{s.background_id}: {corpus.entries[s.background_id].name}")

mask = alpha_mask(pose)
box = tight_bbox(mask)
print(f"mask covers {mask.mean():.1%} of the frame; bbox {box} -> COCO {box.to_coco()}")

# opaque pixels are the render, transparent ones the background
opaque, clear = pose.alpha == 1, pose.alpha == 0
assert np.array_equal(final[opaque], pose.to_uint8()[..., :3][opaque])
assert np.array_equal(final[clear], bg[clear])

im = Image.fromarray(final)
ImageDraw.Draw(im).rectangle([box.x_min, box.y_min, box.x_max, box.y_max], outline=(255, 0, 0))
im.save(OUT / "composite_with_box.png")
save_mask(mask, OUT / "composite_mask.png")
print("wrote", OUT / "composite_with_box.png")
