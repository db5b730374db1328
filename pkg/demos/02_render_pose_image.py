"""Ray-trace a pose image: the product alone, on a transparent canvas.

Alpha is the fraction of each pixel's jittered samples that hit the mesh,
so edges come out antialiased and empty space is exactly transparent.
"""
import time

import numpy as np

from _assets import OUT, ensure_assets
from synthforge.mesh import load_mesh, normalize_mesh
from synthforge.pipeline import default_camera_rings, default_lamps
from synthforge.renderer import RenderConfig, Scene, render
from synthforge.sampling import sample_scene

assets = ensure_assets()
mesh = normalize_mesh(load_mesh(assets / "meshes" / "pot.obj"))
scene = Scene(mesh)  # builds the BVH once; reuse it for every render
print(f"{mesh.n_triangles} triangles, {scene.bvh.n_nodes} BVH nodes")

cfg = RenderConfig(width=224, height=224, samples_per_pixel=16)
render(scene, sample_scene(default_camera_rings(), default_lamps(), 1, 0), RenderConfig(8, 8, 1))  # JIT warm-up

for seed in range(3):
    s = sample_scene(default_camera_rings(), default_lamps(), 1, seed)
    t0 = time.perf_counter()
    img = render(scene, s, cfg)
    dt = time.perf_counter() - t0
    a = img.alpha
    edge = np.mean((a > 0) & (a < 1))
    print(f"seed {seed}: {dt:.2f}s, coverage {np.mean(a > 0):.1%}, partial-alpha pixels {edge:.2%}")
    img.save_png(OUT / f"pose_{seed}.png")

# rendering is a pure function of (scene, config)
again = render(scene, sample_scene(default_camera_rings(), default_lamps(), 1, 2), cfg)
assert np.array_equal(again.pixels, img.pixels)
print("pose images written to", OUT)
