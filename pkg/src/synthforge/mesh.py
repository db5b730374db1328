"""Textured triangle meshes: Wavefront OBJ loading, normalization, BVH build."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

# triangles with less area than this (in normalized units) are dropped on load
MIN_TRIANGLE_AREA = 1e-12
BVH_LEAF_SIZE = 4


class MeshError(ValueError):
    """Malformed or unusable mesh input."""


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        if np.any(self.min > self.max):
            raise ValueError("Aabb min must be <= max componentwise")

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min + self.max)

    def contains(self, points, tol=0.0) -> bool:
        p = np.asarray(points)
        return bool(np.all(p >= self.min - tol) and np.all(p <= self.max + tol))


@dataclass(frozen=True, eq=False)
class TexturedMesh:
    """Triangles index positions and UVs independently, as OBJ faces do.

    ``tri_vertices`` and ``tri_uvs`` are (T, 3) integer arrays; ``texture`` is
    an (H, W, 3) uint8 raster with row 0 at the top (UV v = 1).
    """

    vertices: np.ndarray
    uvs: np.ndarray
    tri_vertices: np.ndarray
    tri_uvs: np.ndarray
    texture: np.ndarray

    def __post_init__(self):
        if self.tri_vertices.shape != self.tri_uvs.shape or self.tri_vertices.ndim != 2:
            raise MeshError("triangle index arrays must both be (T, 3)")
        if len(self.tri_vertices) and (
            self.tri_vertices.min() < 0 or self.tri_vertices.max() >= len(self.vertices)
        ):
            raise MeshError("triangle references a vertex index out of range")
        if len(self.tri_uvs) and (self.tri_uvs.min() < 0 or self.tri_uvs.max() >= len(self.uvs)):
            raise MeshError("triangle references a UV index out of range")
        if self.texture.ndim != 3 or self.texture.shape[2] != 3 or min(self.texture.shape[:2]) < 1:
            raise MeshError(f"texture must be a non-empty RGB raster, got shape {self.texture.shape}")

    @property
    def n_triangles(self) -> int:
        return len(self.tri_vertices)

    def corners(self) -> np.ndarray:
        """(T, 3, 3) triangle corner positions."""
        return self.vertices[self.tri_vertices]

    def bounds(self) -> Aabb:
        if len(self.vertices) == 0:
            raise MeshError("empty mesh")
        used = self.vertices[np.unique(self.tri_vertices)] if self.n_triangles else self.vertices
        return Aabb(used.min(axis=0), used.max(axis=0))

    def face_normals(self) -> np.ndarray:
        """Unit normals from counter-clockwise winding."""
        c = self.corners()
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def triangle_areas(self) -> np.ndarray:
        c = self.corners()
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    def vertex_normals(self) -> np.ndarray:
        """Area-weighted average of adjacent face normals, per position."""
        c = self.corners()
        # the unnormalized cross product is already weighted by twice the area
        weighted = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        acc = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(acc, self.tri_vertices[:, k], weighted)
        norm = np.linalg.norm(acc, axis=1, keepdims=True)
        return np.divide(acc, norm, out=np.zeros_like(acc), where=norm > 0)


def _resolve_index(token: str, count: int, path, lineno: int) -> int:
    try:
        i = int(token)
    except ValueError:
        raise MeshError(f"{path}:{lineno}: malformed index {token!r} in face") from None
    if i > 0:
        return i - 1
    if i < 0:
        return count + i
    raise MeshError(f"{path}:{lineno}: face index 0 is invalid (OBJ indices are 1-based)")


def _texture_from_mtl(mtl_path: Path) -> Path | None:
    try:
        lines = mtl_path.read_text(errors="replace").splitlines()
    except OSError:
        return None
    for line in lines:
        toks = line.split()
        if len(toks) >= 2 and toks[0] == "map_Kd":
            # options such as "-s 1 1 1" may precede the file name
            return mtl_path.parent / toks[-1]
    return None


def parse_obj(geometry_path):
    """Parse positions, UVs and fan-triangulated faces from an OBJ file.

    Returns ``(vertices, uvs, tri_vertices, tri_uvs, mtllibs)``.
    """
    path = Path(geometry_path)
    vertices, uvs = [], []
    faces = []  # (lineno, [(vi, ti), ...])
    mtllibs = []
    with open(path, "r", errors="replace") as f:
        for lineno, line in enumerate(f, start=1):
            toks = line.split()
            if not toks or toks[0].startswith("#"):
                continue
            tag = toks[0]
            try:
                if tag == "v":
                    vertices.append([float(x) for x in toks[1:4]])
                    if len(vertices[-1]) != 3:
                        raise ValueError
                elif tag == "vt":
                    uv = [float(x) for x in toks[1:3]]
                    if len(uv) == 1:
                        uv.append(0.0)
                    if not uv:
                        raise ValueError
                    uvs.append(uv)
                elif tag == "mtllib":
                    mtllibs.append(" ".join(toks[1:]))
            except ValueError:
                raise MeshError(f"{path}:{lineno}: malformed {tag!r} record") from None
            if tag != "f":
                continue
            if len(toks) < 4:
                raise MeshError(f"{path}:{lineno}: face needs at least 3 vertices")
            corners = []
            for tok in toks[1:]:
                parts = tok.split("/")
                if len(parts) < 2 or not parts[1]:
                    raise MeshError(f"{path}:{lineno}: face vertex {tok!r} has no texture coordinate")
                vi = _resolve_index(parts[0], len(vertices), path, lineno)
                ti = _resolve_index(parts[1], len(uvs), path, lineno)
                corners.append((vi, ti))
            faces.append((lineno, corners))

    tri_v, tri_t = [], []
    for lineno, corners in faces:
        for vi, ti in corners:
            if not 0 <= vi < len(vertices):
                raise MeshError(
                    f"{path}:{lineno}: vertex index {vi + 1} out of range (file has {len(vertices)} vertices)"
                )
            if not 0 <= ti < len(uvs):
                raise MeshError(
                    f"{path}:{lineno}: texture index {ti + 1} out of range (file has {len(uvs)} UVs)"
                )
        # fan triangulation; exact for the convex polygons scanners emit
        for k in range(1, len(corners) - 1):
            a, b, c = corners[0], corners[k], corners[k + 1]
            tri_v.append((a[0], b[0], c[0]))
            tri_t.append((a[1], b[1], c[1]))

    return (
        np.array(vertices, dtype=np.float64).reshape(-1, 3),
        np.array(uvs, dtype=np.float64).reshape(-1, 2),
        np.array(tri_v, dtype=np.int64).reshape(-1, 3),
        np.array(tri_t, dtype=np.int64).reshape(-1, 3),
        mtllibs,
    )


def load_texture(texture_path) -> np.ndarray:
    try:
        with Image.open(texture_path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    except FileNotFoundError:
        raise MeshError(f"texture not found: {texture_path}") from None
    except OSError as e:
        raise MeshError(f"cannot decode texture {texture_path}: {e}") from None


def load_mesh(geometry_path, texture_path=None) -> TexturedMesh:
    """Load an OBJ mesh and its texture.

    When ``texture_path`` is omitted the diffuse map (``map_Kd``) of the
    first referenced MTL file is used. Degenerate triangles are dropped.
    """
    geometry_path = Path(geometry_path)
    if not geometry_path.is_file():
        raise MeshError(f"mesh not found: {geometry_path}")
    vertices, uvs, tri_v, tri_t, mtllibs = parse_obj(geometry_path)
    if texture_path is None:
        for lib in mtllibs:
            texture_path = _texture_from_mtl(geometry_path.parent / lib)
            if texture_path is not None:
                break
        else:
            raise MeshError(f"{geometry_path}: no texture given and no map_Kd found in its MTL files")
    texture = load_texture(texture_path)
    if len(tri_v) == 0:
        raise MeshError(f"{geometry_path}: no faces")

    mesh = TexturedMesh(vertices, uvs, tri_v, tri_t, texture)
    # judge degeneracy at normalized scale so the threshold is unit-free
    scale = float(mesh.bounds().extent.max())
    keep = mesh.triangle_areas() > MIN_TRIANGLE_AREA * scale * scale if scale > 0 else np.zeros(len(tri_v), bool)
    if not keep.all():
        log.warning("%s: dropped %d degenerate triangles", geometry_path, int((~keep).sum()))
        if not keep.any():
            raise MeshError(f"{geometry_path}: every triangle is degenerate")
        mesh = replace(mesh, tri_vertices=tri_v[keep], tri_uvs=tri_t[keep])
    return mesh


def normalize_mesh(mesh: TexturedMesh) -> TexturedMesh:
    """Center the bounding box on the origin and scale its longest edge to 1."""
    if mesh.n_triangles == 0 or len(mesh.vertices) == 0:
        raise MeshError("cannot normalize an empty mesh")
    box = mesh.bounds()
    longest = float(box.extent.max())
    if longest == 0:
        raise MeshError("mesh has zero extent")
    return replace(mesh, vertices=(mesh.vertices - box.center) / longest)


class Bvh:
    """Flattened bounding volume hierarchy over a mesh's triangles.

    Node ``i`` is a leaf when ``left[i] == -1``; its triangles are the BVH
    slots ``start[i] : start[i] + count[i]``. ``tri_index`` maps a slot back
    to the mesh triangle id. ``v0``, ``e1``, ``e2`` hold per-slot triangle
    geometry laid out for the traversal kernels.
    """

    def __init__(self, lo, hi, left, right, start, count, tri_index, corners):
        self.lo, self.hi = lo, hi
        self.left, self.right = left, right
        self.start, self.count = start, count
        self.tri_index = tri_index
        c = corners[tri_index]
        self.v0 = np.ascontiguousarray(c[:, 0])
        self.e1 = np.ascontiguousarray(c[:, 1] - c[:, 0])
        self.e2 = np.ascontiguousarray(c[:, 2] - c[:, 0])

    @property
    def n_nodes(self) -> int:
        return len(self.lo)

    def is_leaf(self, node: int) -> bool:
        return self.left[node] < 0

    def leaves(self):
        return [i for i in range(self.n_nodes) if self.is_leaf(i)]

    def leaf_triangles(self, node: int) -> np.ndarray:
        s = self.start[node]
        return self.tri_index[s : s + self.count[node]]

    def kernel_args(self):
        return (self.lo, self.hi, self.left, self.right, self.start, self.count, self.v0, self.e1, self.e2)


def build_bvh(mesh: TexturedMesh, leaf_size: int = BVH_LEAF_SIZE) -> Bvh:
    """Median split on the longest centroid axis until leaves hold <= leaf_size triangles."""
    corners = mesh.corners()
    tri_lo = corners.min(axis=1)
    tri_hi = corners.max(axis=1)
    centroids = corners.mean(axis=1)
    order = np.arange(mesh.n_triangles)

    lo, hi, left, right, start, count = [], [], [], [], [], []

    def new_node(s, e):
        idx = order[s:e]
        lo.append(tri_lo[idx].min(axis=0))
        hi.append(tri_hi[idx].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(s)
        count.append(e - s)
        return len(lo) - 1

    stack = [new_node(0, mesh.n_triangles)]
    while stack:
        node = stack.pop()
        s, n = start[node], count[node]
        if n <= leaf_size:
            continue
        idx = order[s : s + n]
        c = centroids[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        mid = n // 2
        part = np.argpartition(c[:, axis], mid, kind="introselect")
        order[s : s + n] = idx[part]
        left[node] = new_node(s, s + mid)
        right[node] = new_node(s + mid, s + n)
        stack.append(right[node])
        stack.append(left[node])

    return Bvh(
        np.array(lo, dtype=np.float64).reshape(-1, 3),
        np.array(hi, dtype=np.float64).reshape(-1, 3),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(start, dtype=np.int64),
        np.array(count, dtype=np.int64),
        order.copy(),
        corners,
    )


def write_obj(path, mesh: TexturedMesh, texture_name: str | None = None) -> None:
    """Write ``mesh`` as OBJ (plus an MTL referencing ``texture_name`` if given)."""
    path = Path(path)
    lines = []
    if texture_name is not None:
        mtl = path.with_suffix(".mtl")
        mtl.write_text(f"newmtl material0\nKd 1 1 1\nmap_Kd {texture_name}\n")
        lines += [f"mtllib {mtl.name}", "usemtl material0"]
    lines += [f"v {float(x)!r} {float(y)!r} {float(z)!r}" for x, y, z in mesh.vertices]
    lines += [f"vt {float(u)!r} {float(v)!r}" for u, v in mesh.uvs]
    for tv, tt in zip(mesh.tri_vertices, mesh.tri_uvs):
        lines.append("f " + " ".join(f"{a + 1}/{b + 1}" for a, b in zip(tv, tt)))
    path.write_text("\n".join(lines) + "\n")
