"""CPU ray tracer producing straight-alpha RGBA pose images."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from PIL import Image

from . import _kernels
from .mesh import Bvh, TexturedMesh, build_bvh
from .sampling import SceneSample


@dataclass(frozen=True)
class RenderConfig:
    width: int = 300
    height: int = 300
    samples_per_pixel: int = 16
    ambient: float = 0.08
    fov_y: float = math.radians(40.0)
    gamma: float = 2.2
    smooth_shading: bool = True

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"resolution must be at least 1x1, got {self.width}x{self.height}")
        if self.samples_per_pixel < 1:
            raise ValueError("samples_per_pixel must be >= 1")
        if not 0.0 <= self.ambient <= 1.0:
            raise ValueError("ambient must lie in [0, 1]")
        if not 0.0 < self.fov_y < math.pi:
            raise ValueError("fov_y must lie in (0, pi)")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")


def quantize(x: np.ndarray) -> np.ndarray:
    """[0, 1] floats to uint8 with round-half-up."""
    return np.floor(np.clip(x, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


class RgbaImage:
    """(H, W, 4) float image, gamma-encoded color with straight alpha."""

    def __init__(self, pixels: np.ndarray):
        pixels = np.asarray(pixels, dtype=np.float64)
        if pixels.ndim != 3 or pixels.shape[2] != 4:
            raise ValueError(f"expected (H, W, 4) pixels, got {pixels.shape}")
        self.pixels = pixels

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def rgb(self) -> np.ndarray:
        return self.pixels[..., :3]

    @property
    def alpha(self) -> np.ndarray:
        return self.pixels[..., 3]

    def to_uint8(self) -> np.ndarray:
        return quantize(self.pixels)

    def save_png(self, path) -> None:
        Image.fromarray(self.to_uint8(), mode="RGBA").save(path, format="PNG")

    @classmethod
    def load_png(cls, path) -> "RgbaImage":
        with Image.open(path) as im:
            return cls(np.asarray(im.convert("RGBA"), dtype=np.float64) / 255.0)


class Hit(NamedTuple):
    t: float
    triangle: int
    barycentrics: tuple[float, float, float]


class Scene:
    """A normalized mesh bundled with its BVH and per-slot shading data.

    Build once per mesh and share read-only across renders.
    """

    def __init__(self, mesh: TexturedMesh, bvh: Bvh | None = None):
        self.mesh = mesh
        self.bvh = bvh if bvh is not None else build_bvh(mesh)
        order = self.bvh.tri_index
        self.face_normals = np.ascontiguousarray(mesh.face_normals()[order])
        self.corner_normals = np.ascontiguousarray(mesh.vertex_normals()[mesh.tri_vertices[order]])
        self.corner_uvs = np.ascontiguousarray(mesh.uvs[mesh.tri_uvs[order]])
        self.texture = np.ascontiguousarray(mesh.texture)


def intersect(origin, direction, accel: Bvh) -> Hit | None:
    """Nearest hit with t > 1e-6 along a unit-length ray, or None."""
    o = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    t, slot, u, v = _kernels.trace(o[0], o[1], o[2], d[0], d[1], d[2], _kernels.T_MIN, np.inf, False,
                                   *accel.kernel_args())
    if slot < 0:
        return None
    return Hit(float(t), int(accel.tri_index[slot]), (1.0 - u - v, u, v))


def intersect_many(origins, directions, accel: Bvh):
    """Vectorized :func:`intersect`: returns (t, triangle id or -1, (N, 3) barycentrics)."""
    o = np.ascontiguousarray(np.broadcast_to(np.asarray(origins, float), np.shape(directions)))
    d = np.ascontiguousarray(directions, dtype=float)
    t, slots, uv = _kernels.trace_many(o, d, *accel.kernel_args())
    tri = np.where(slots >= 0, accel.tri_index[np.maximum(slots, 0)], -1)
    bary = np.column_stack([1.0 - uv[:, 0] - uv[:, 1], uv[:, 0], uv[:, 1]])
    return t, tri, bary


def gamma_lut(gamma: float) -> np.ndarray:
    return (np.arange(256) / 255.0) ** gamma


_NO_LAMPS = (np.zeros((0, 3)), np.zeros(0))


def _lamp_arrays(lamps):
    if not lamps:
        return _NO_LAMPS
    pos = np.array([l[0] for l in lamps], dtype=np.float64).reshape(-1, 3)
    energy = np.array([l[1] for l in lamps], dtype=np.float64)
    return pos, energy


def _empty_bvh_args():
    z3 = np.zeros((0, 3))
    # a single empty leaf whose inverted box rejects every ray
    lo = np.full((1, 3), np.inf)
    hi = np.full((1, 3), -np.inf)
    return (lo, hi, np.full(1, -1, np.int64), np.full(1, -1, np.int64), np.zeros(1, np.int64),
            np.zeros(1, np.int64), z3, z3, z3)


def shade(point, normal, uv, texture, lamps, ambient, *, gamma=2.2, occluders: Bvh | None = None,
          clamp=True) -> np.ndarray:
    """Linear-light Lambertian color at one surface point.

    ``texture(uv) * (ambient + sum_i E_i max(0, n.l_i) / d_i^2)``; lamps
    blocked by ``occluders`` contribute nothing. Pass ``clamp=False`` for the
    pre-clamp radiance.
    """
    p = np.asarray(point, dtype=float)
    n = np.asarray(normal, dtype=float)
    tex = np.ascontiguousarray(texture, dtype=np.uint8)
    r, g, b = _kernels.sample_texture(tex, gamma_lut(gamma), float(uv[0]), float(uv[1]))
    pos, energy = _lamp_arrays(lamps)
    bvh_args = occluders.kernel_args() if occluders is not None else _empty_bvh_args()
    e = _kernels.irradiance(p[0], p[1], p[2], n[0], n[1], n[2], n[0], n[1], n[2], pos, energy,
                            float(ambient), occluders is not None, *bvh_args)
    rgb = np.array([r, g, b]) * e
    return np.clip(rgb, 0.0, 1.0) if clamp else rgb


def camera_frame(scene: SceneSample) -> np.ndarray:
    """Rows: origin, forward, right, up (orthonormal, right-handed look-at)."""
    origin = np.asarray(scene.camera_position, dtype=float)
    forward = np.asarray(scene.camera_target, dtype=float) - origin
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(scene.camera_up, dtype=float))
    norm = np.linalg.norm(right)
    if norm < 1e-9:
        # up parallel to the view; any perpendicular works
        right = np.cross(forward, [1.0, 0.0, 0.0] if abs(forward[0]) < 0.9 else [0.0, 1.0, 0.0])
        norm = np.linalg.norm(right)
    right /= norm
    up = np.cross(right, forward)
    return np.ascontiguousarray(np.stack([origin, forward, right, up]))


def primary_ray_directions(scene: SceneSample, config: RenderConfig) -> np.ndarray:
    """(H, W, spp, 3) unit directions of every primary ray :func:`render` traces."""
    dirs = _kernels.camera_rays(
        config.width, config.height, config.samples_per_pixel, np.uint64(scene.rng_seed),
        camera_frame(scene), math.tan(config.fov_y / 2), config.width / config.height,
    )
    return dirs.reshape(config.height, config.width, config.samples_per_pixel, 3)


def render(target: Scene | TexturedMesh, scene: SceneSample, config: RenderConfig) -> RgbaImage:
    """Ray-trace the pose image of ``target`` under ``scene``.

    Color is the gamma-encoded mean over jittered samples that hit the mesh;
    alpha is the fraction of samples that hit, so untouched pixels are
    exactly (0, 0, 0, 0). Output depends only on (scene, config).
    """
    if isinstance(target, TexturedMesh):
        target = Scene(target)
    pos, energy = _lamp_arrays(scene.lamps)
    out = np.empty((config.height, config.width, 4))
    _kernels.render_kernel(
        config.width, config.height, config.samples_per_pixel, np.uint64(scene.rng_seed),
        camera_frame(scene), math.tan(config.fov_y / 2), config.width / config.height,
        *target.bvh.kernel_args(),
        target.corner_normals, target.face_normals, target.corner_uvs, config.smooth_shading,
        target.texture, gamma_lut(config.gamma), pos, energy, float(config.ambient),
        1.0 / config.gamma, out,
    )
    return RgbaImage(out)
