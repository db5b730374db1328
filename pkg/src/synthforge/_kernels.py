"""Numba kernels for ray traversal and shading.

Everything here works on plain arrays so it can be jitted; the public
wrappers live in :mod:`synthforge.renderer`.
"""
import math

import numpy as np
from numba import njit

T_MIN = 1e-6
SHADOW_OFFSET = 1e-5
_STACK_SIZE = 128

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)


@njit(cache=True)
def mix64(z):
    """splitmix64 finalizer on a uint64."""
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def _u01(h):
    return float(h >> _S11) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def jitter(seed, pixel, sample):
    """Sub-pixel offset in [0, 1)^2 keyed only by (seed, pixel, sample)."""
    h = mix64(np.uint64(seed) ^ mix64(np.uint64(pixel) * _GOLDEN + np.uint64(sample)))
    return _u01(h), _u01(mix64(h + _GOLDEN))


@njit(cache=True)
def _ray_box(ox, oy, oz, ix, iy, iz, lo, hi, node, tmax):
    t0 = (lo[node, 0] - ox) * ix
    t1 = (hi[node, 0] - ox) * ix
    tn, tf = min(t0, t1), max(t0, t1)
    t0 = (lo[node, 1] - oy) * iy
    t1 = (hi[node, 1] - oy) * iy
    tn, tf = max(tn, min(t0, t1)), min(tf, max(t0, t1))
    t0 = (lo[node, 2] - oz) * iz
    t1 = (hi[node, 2] - oz) * iz
    tn, tf = max(tn, min(t0, t1)), min(tf, max(t0, t1))
    # NaN from 0 * inf on a slab boundary compares False and is treated as a hit
    if tn > tf or tf < 0.0 or tn > tmax:
        return np.inf
    return tn


@njit(cache=True)
def _ray_triangle(ox, oy, oz, dx, dy, dz, v0, e1, e2, k):
    """Moller-Trumbore; returns (t, u, v) with t = inf on a miss."""
    ax, ay, az = e1[k, 0], e1[k, 1], e1[k, 2]
    bx, by, bz = e2[k, 0], e2[k, 1], e2[k, 2]
    px = dy * bz - dz * by
    py = dz * bx - dx * bz
    pz = dx * by - dy * bx
    det = ax * px + ay * py + az * pz
    if abs(det) < 1e-14:
        return np.inf, 0.0, 0.0
    inv = 1.0 / det
    tx, ty, tz = ox - v0[k, 0], oy - v0[k, 1], oz - v0[k, 2]
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return np.inf, 0.0, 0.0
    qx = ty * az - tz * ay
    qy = tz * ax - tx * az
    qz = tx * ay - ty * ax
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return np.inf, 0.0, 0.0
    t = (bx * qx + by * qy + bz * qz) * inv
    return t, u, v


@njit(cache=True)
def trace(ox, oy, oz, dx, dy, dz, tmin, tmax, any_hit, lo, hi, left, right, start, count, v0, e1, e2):
    """Nearest hit in (tmin, tmax). Returns (t, slot, u, v); slot = -1 on a miss."""
    ix = 1.0 / dx if dx != 0.0 else np.inf
    iy = 1.0 / dy if dy != 0.0 else np.inf
    iz = 1.0 / dz if dz != 0.0 else np.inf
    best_t, best_k, best_u, best_v = tmax, -1, 0.0, 0.0
    stack = np.empty(_STACK_SIZE, dtype=np.int64)
    sp = 0
    if _ray_box(ox, oy, oz, ix, iy, iz, lo, hi, 0, best_t) < np.inf:
        stack[0] = 0
        sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if left[node] < 0:
            s = start[node]
            for k in range(s, s + count[node]):
                t, u, v = _ray_triangle(ox, oy, oz, dx, dy, dz, v0, e1, e2, k)
                if t > tmin and t < best_t:
                    best_t, best_k, best_u, best_v = t, k, u, v
                    if any_hit:
                        return best_t, best_k, best_u, best_v
            continue
        a, b = left[node], right[node]
        ta = _ray_box(ox, oy, oz, ix, iy, iz, lo, hi, a, best_t)
        tb = _ray_box(ox, oy, oz, ix, iy, iz, lo, hi, b, best_t)
        # push the farther child first so the nearer one is popped next
        if ta > tb:
            a, b, ta, tb = b, a, tb, ta
        if tb < np.inf:
            stack[sp] = b
            sp += 1
        if ta < np.inf:
            stack[sp] = a
            sp += 1
    if best_k < 0:
        return np.inf, -1, 0.0, 0.0
    return best_t, best_k, best_u, best_v


@njit(cache=True)
def trace_many(origins, dirs, lo, hi, left, right, start, count, v0, e1, e2):
    n = origins.shape[0]
    ts = np.empty(n)
    slots = np.empty(n, dtype=np.int64)
    uv = np.empty((n, 2))
    for i in range(n):
        t, k, u, v = trace(
            origins[i, 0], origins[i, 1], origins[i, 2], dirs[i, 0], dirs[i, 1], dirs[i, 2],
            T_MIN, np.inf, False, lo, hi, left, right, start, count, v0, e1, e2,
        )
        ts[i], slots[i], uv[i, 0], uv[i, 1] = t, k, u, v
    return ts, slots, uv


@njit(cache=True)
def sample_texture(texture, lut, u, v):
    """Bilinear, wrapped lookup returning linear-light RGB; v = 1 is the top row."""
    h, w = texture.shape[0], texture.shape[1]
    if not (math.isfinite(u) and math.isfinite(v)):
        return 0.0, 0.0, 0.0
    x = (u - math.floor(u)) * w - 0.5
    y = (1.0 - (v - math.floor(v))) * h - 0.5
    x0f, y0f = math.floor(x), math.floor(y)
    fx, fy = x - x0f, y - y0f
    x0, y0 = int(x0f) % w, int(y0f) % h
    x1, y1 = (x0 + 1) % w, (y0 + 1) % h
    w00, w01 = (1.0 - fx) * (1.0 - fy), fx * (1.0 - fy)
    w10, w11 = (1.0 - fx) * fy, fx * fy
    r = (w00 * lut[texture[y0, x0, 0]] + w01 * lut[texture[y0, x1, 0]]
         + w10 * lut[texture[y1, x0, 0]] + w11 * lut[texture[y1, x1, 0]])
    g = (w00 * lut[texture[y0, x0, 1]] + w01 * lut[texture[y0, x1, 1]]
         + w10 * lut[texture[y1, x0, 1]] + w11 * lut[texture[y1, x1, 1]])
    b = (w00 * lut[texture[y0, x0, 2]] + w01 * lut[texture[y0, x1, 2]]
         + w10 * lut[texture[y1, x0, 2]] + w11 * lut[texture[y1, x1, 2]])
    return r, g, b


@njit(cache=True)
def irradiance(px, py, pz, nx, ny, nz, gx, gy, gz, lamp_pos, lamp_e, ambient, shadows,
               lo, hi, left, right, start, count, v0, e1, e2):
    """ambient + sum_i E_i max(0, n.l_i) / d_i^2, with optional shadow rays.

    (gx, gy, gz) is the geometric normal on the lit side, used to offset
    shadow-ray origins off the surface.
    """
    total = ambient
    for i in range(lamp_pos.shape[0]):
        lx, ly, lz = lamp_pos[i, 0] - px, lamp_pos[i, 1] - py, lamp_pos[i, 2] - pz
        d2 = lx * lx + ly * ly + lz * lz
        if d2 == 0.0:
            continue
        d = math.sqrt(d2)
        lx, ly, lz = lx / d, ly / d, lz / d
        cos = nx * lx + ny * ly + nz * lz
        if cos <= 0.0:
            continue
        if shadows:
            ox = px + gx * SHADOW_OFFSET
            oy = py + gy * SHADOW_OFFSET
            oz = pz + gz * SHADOW_OFFSET
            t, k, _, _ = trace(ox, oy, oz, lx, ly, lz, T_MIN, d - SHADOW_OFFSET, True,
                               lo, hi, left, right, start, count, v0, e1, e2)
            if k >= 0:
                continue
        total += lamp_e[i] * cos / d2
    return total


@njit(cache=True)
def render_kernel(width, height, spp, seed, cam, tan_half, aspect,
                  lo, hi, left, right, start, count, v0, e1, e2,
                  corner_normals, face_normals, corner_uvs, smooth,
                  texture, lut, lamp_pos, lamp_e, ambient, inv_gamma, out):
    """Fill ``out`` (H, W, 4) with straight-alpha, gamma-encoded RGBA.

    ``cam`` rows are origin, forward, right, up. Color is the mean over the
    samples that hit; alpha is the hit fraction.
    """
    ox, oy, oz = cam[0, 0], cam[0, 1], cam[0, 2]
    for row in range(height):
        for col in range(width):
            pixel = row * width + col
            acc_r = acc_g = acc_b = 0.0
            hits = 0
            for s in range(spp):
                jx, jy = jitter(seed, pixel, s)
                sx = (2.0 * (col + jx) / width - 1.0) * tan_half * aspect
                sy = (1.0 - 2.0 * (row + jy) / height) * tan_half
                dx = cam[1, 0] + sx * cam[2, 0] + sy * cam[3, 0]
                dy = cam[1, 1] + sx * cam[2, 1] + sy * cam[3, 1]
                dz = cam[1, 2] + sx * cam[2, 2] + sy * cam[3, 2]
                dn = math.sqrt(dx * dx + dy * dy + dz * dz)
                dx, dy, dz = dx / dn, dy / dn, dz / dn
                t, k, u, v = trace(ox, oy, oz, dx, dy, dz, T_MIN, np.inf, False,
                                   lo, hi, left, right, start, count, v0, e1, e2)
                if k < 0:
                    continue
                hits += 1
                w0 = 1.0 - u - v
                px, py, pz = ox + t * dx, oy + t * dy, oz + t * dz
                gx, gy, gz = face_normals[k, 0], face_normals[k, 1], face_normals[k, 2]
                if gx * dx + gy * dy + gz * dz > 0.0:
                    gx, gy, gz = -gx, -gy, -gz
                nx, ny, nz = gx, gy, gz
                if smooth:
                    sxn = w0 * corner_normals[k, 0, 0] + u * corner_normals[k, 1, 0] + v * corner_normals[k, 2, 0]
                    syn = w0 * corner_normals[k, 0, 1] + u * corner_normals[k, 1, 1] + v * corner_normals[k, 2, 1]
                    szn = w0 * corner_normals[k, 0, 2] + u * corner_normals[k, 1, 2] + v * corner_normals[k, 2, 2]
                    ln = math.sqrt(sxn * sxn + syn * syn + szn * szn)
                    if ln > 1e-12:
                        sxn, syn, szn = sxn / ln, syn / ln, szn / ln
                        if sxn * gx + syn * gy + szn * gz < 0.0:
                            sxn, syn, szn = -sxn, -syn, -szn
                        nx, ny, nz = sxn, syn, szn
                tu = w0 * corner_uvs[k, 0, 0] + u * corner_uvs[k, 1, 0] + v * corner_uvs[k, 2, 0]
                tv = w0 * corner_uvs[k, 0, 1] + u * corner_uvs[k, 1, 1] + v * corner_uvs[k, 2, 1]
                tr, tg, tb = sample_texture(texture, lut, tu, tv)
                e = irradiance(px, py, pz, nx, ny, nz, gx, gy, gz, lamp_pos, lamp_e, ambient, True,
                               lo, hi, left, right, start, count, v0, e1, e2)
                acc_r += min(max(tr * e, 0.0), 1.0)
                acc_g += min(max(tg * e, 0.0), 1.0)
                acc_b += min(max(tb * e, 0.0), 1.0)
            if hits == 0:
                out[row, col, 0] = out[row, col, 1] = out[row, col, 2] = out[row, col, 3] = 0.0
            else:
                out[row, col, 0] = (acc_r / hits) ** inv_gamma
                out[row, col, 1] = (acc_g / hits) ** inv_gamma
                out[row, col, 2] = (acc_b / hits) ** inv_gamma
                out[row, col, 3] = hits / spp


@njit(cache=True)
def camera_rays(width, height, spp, seed, cam, tan_half, aspect):
    """The primary rays ``render_kernel`` shoots, as (H*W*spp, 3) directions."""
    dirs = np.empty((height * width * spp, 3))
    i = 0
    for row in range(height):
        for col in range(width):
            pixel = row * width + col
            for s in range(spp):
                jx, jy = jitter(seed, pixel, s)
                sx = (2.0 * (col + jx) / width - 1.0) * tan_half * aspect
                sy = (1.0 - 2.0 * (row + jy) / height) * tan_half
                dx = cam[1, 0] + sx * cam[2, 0] + sy * cam[3, 0]
                dy = cam[1, 1] + sx * cam[2, 1] + sy * cam[3, 1]
                dz = cam[1, 2] + sx * cam[2, 2] + sy * cam[3, 2]
                dn = math.sqrt(dx * dx + dy * dy + dz * dz)
                dirs[i, 0], dirs[i, 1], dirs[i, 2] = dx / dn, dy / dn, dz / dn
                i += 1
    return dirs
