"""Procedural textured meshes for tests, demos and smoke runs."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from PIL import Image

from .mesh import TexturedMesh, write_obj


def solid_texture(rgb=(255, 255, 255), size=4) -> np.ndarray:
    return np.tile(np.asarray(rgb, dtype=np.uint8), (size, size, 1))


def label_texture(seed: int, size: int = 64) -> np.ndarray:
    """Colored bands plus a checker stripe, loosely like a product label."""
    rng = np.random.default_rng(seed)
    n_bands = int(rng.integers(3, 7))
    colors = rng.integers(0, 256, size=(n_bands, 3))
    rows = (np.arange(size) * n_bands // size)
    tex = colors[rows][:, None, :].repeat(size, axis=1)
    y0 = int(rng.integers(size // 4, size // 2))
    yy, xx = np.mgrid[y0 : y0 + size // 8, 0:size]
    tex[y0 : y0 + size // 8][((xx // 4 + yy // 4) % 2) == 0] = 255 - colors[0]
    return tex.astype(np.uint8)


def make_quad(size: float = 1.0, texture=None) -> TexturedMesh:
    """Square in the z = 0 plane, centered at the origin, facing +Z."""
    h = size / 2
    verts = np.array([[-h, -h, 0], [h, -h, 0], [h, h, 0], [-h, h, 0]], dtype=float)
    uvs = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    tris = np.array([[0, 1, 2], [0, 2, 3]])
    return TexturedMesh(verts, uvs, tris, tris.copy(), solid_texture() if texture is None else texture)


def make_box(size=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0), texture=None) -> TexturedMesh:
    """Axis-aligned box, 4 vertices per face so each face maps the whole texture."""
    sx, sy, sz = (np.asarray(size, dtype=float) / 2)
    c = np.asarray(center, dtype=float)
    faces = [
        # (corner signs in counter-clockwise order seen from outside)
        [(1, -1, -1), (1, 1, -1), (1, 1, 1), (1, -1, 1)],
        [(-1, 1, -1), (-1, -1, -1), (-1, -1, 1), (-1, 1, 1)],
        [(1, 1, -1), (-1, 1, -1), (-1, 1, 1), (1, 1, 1)],
        [(-1, -1, -1), (1, -1, -1), (1, -1, 1), (-1, -1, 1)],
        [(-1, -1, 1), (1, -1, 1), (1, 1, 1), (-1, 1, 1)],
        [(-1, 1, -1), (1, 1, -1), (1, -1, -1), (-1, -1, -1)],
    ]
    verts, tris = [], []
    for f, corners in enumerate(faces):
        for s in corners:
            verts.append(c + np.array(s) * (sx, sy, sz))
        b = 4 * f
        tris += [[b, b + 1, b + 2], [b, b + 2, b + 3]]
    uvs = np.tile(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float), (6, 1))
    tris = np.array(tris)
    return TexturedMesh(np.array(verts), uvs, tris, tris.copy(), solid_texture() if texture is None else texture)


def make_cylinder(radius=0.5, height=1.0, segments=32, texture=None) -> TexturedMesh:
    """Closed cylinder along Z; the side wraps the texture once around."""
    verts, uvs, tv, tt = [], [], [], []
    z0, z1 = -height / 2, height / 2
    for i in range(segments + 1):
        a = 2 * math.pi * i / segments
        x, y = radius * math.cos(a), radius * math.sin(a)
        verts += [[x, y, z0], [x, y, z1]]
        uvs += [[i / segments, 0.0], [i / segments, 1.0]]
    for i in range(segments):
        b = 2 * i
        tv += [[b, b + 2, b + 3], [b, b + 3, b + 1]]
    tt = [list(t) for t in tv]
    # caps sample the bottom texel row
    bottom, top = len(verts), len(verts) + 1
    verts += [[0, 0, z0], [0, 0, z1]]
    cap_uv = len(uvs)
    uvs.append([0.5, 0.02])
    for i in range(segments):
        b = 2 * i
        tv += [[bottom, b + 2, b], [top, b + 1, b + 3]]
        tt += [[cap_uv] * 3, [cap_uv] * 3]
    return TexturedMesh(
        np.array(verts, dtype=float), np.array(uvs, dtype=float), np.array(tv), np.array(tt),
        label_texture(0) if texture is None else texture,
    )


def random_triangles(n: int, rng: np.random.Generator, spread=1.0, size=0.2) -> TexturedMesh:
    """n independent random triangles scattered in a cube; a BVH stress input."""
    centers = rng.uniform(-spread, spread, size=(n, 1, 3))
    verts = (centers + rng.normal(scale=size, size=(n, 3, 3))).reshape(-1, 3)
    tris = np.arange(3 * n).reshape(n, 3)
    uvs = np.zeros((1, 2))
    return TexturedMesh(verts, uvs, tris, np.zeros_like(tris), solid_texture())


def save_mesh(mesh: TexturedMesh, directory, name: str):
    """Write ``name.obj``/``name.mtl``/``name.png``; returns (obj path, texture path)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tex_path = directory / f"{name}.png"
    Image.fromarray(mesh.texture, mode="RGB").save(tex_path)
    obj_path = directory / f"{name}.obj"
    write_obj(obj_path, mesh, texture_name=tex_path.name)
    return obj_path, tex_path


def make_backgrounds(directory, n: int, seed: int = 0, size=(320, 240)):
    """Write ``n`` noisy gradient images as a stand-in background corpus."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    w, h = size
    paths = []
    for i in range(n):
        c0, c1 = rng.integers(0, 256, size=(2, 3))
        t = np.linspace(0, 1, w)[None, :, None]
        img = c0 * (1 - t) + c1 * t + rng.normal(scale=12, size=(h, w, 3))
        img = np.clip(img, 0, 255).astype(np.uint8)
        p = directory / f"bg_{i:04d}.{'png' if i % 2 == 0 else 'jpg'}"
        Image.fromarray(img, mode="RGB").save(p)
        paths.append(p)
    return paths
