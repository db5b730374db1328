"""Where the camera and lamps go.

Camera positions are drawn on rings around the object: a uniform azimuth,
a normally distributed elevation and a truncated-normal distance. Lamps use
a very wide ring, which spreads them roughly evenly over a sphere.
"""
import math

import numpy as np

from synthforge.pipeline import default_camera_rings, default_lamps
from synthforge.sampling import RingSpec, TruncatedNormalSpec, sample_ring_location, sample_scene

rng = np.random.default_rng(0)

# a ring with almost no elevation spread stays in its plane
flat = RingSpec(TruncatedNormalSpec(2.0, 1e-9, 1.0, 3.0), 1e-9, "Y")
pts = np.array([sample_ring_location(flat, rng) for _ in range(1000)])
print(f"flat Y ring: max |y| = {np.abs(pts[:, 1]).max():.2e}, radius {np.linalg.norm(pts, axis=1).mean():.3f}")

# widening the elevation spread to pi/3 covers the sphere fairly evenly
wide = RingSpec(TruncatedNormalSpec(1.0, 1e-12, 0.0, 2.0), math.pi / 3, "Z")
z = np.sort([sample_ring_location(wide, rng)[2] for _ in range(100_000)])
n = len(z)
ks = max(np.max(np.arange(1, n + 1) / n - (z + 1) / 2), np.max((z + 1) / 2 - np.arange(n) / n))
print(f"pi/3 ring: KS distance of z from U(-1, 1) = {ks:.4f}")
print("z histogram:", np.histogram(z, bins=8, range=(-1, 1))[0])

# full scene draws with the default distributions
rings, lamps = default_camera_rings(), default_lamps()
for seed in range(4):
    s = sample_scene(rings, lamps, corpus_size=12, seed=seed)
    cam = np.round(s.camera_position, 2)
    print(f"seed {seed}: camera {cam} dist {np.linalg.norm(s.camera_position):.2f}, "
          f"{len(s.lamps)} lamp(s) E={[round(l.energy, 1) for l in s.lamps]}, background {s.background_id}")

# same seed, same scene
assert sample_scene(rings, lamps, 12, 3) == sample_scene(rings, lamps, 12, 3)
