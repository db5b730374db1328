"""Scene-parameter distributions: camera rings, point lamps, backgrounds.

Every sampler takes an explicit ``numpy.random.Generator`` so a scene is a
pure function of the seed it was drawn with.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import special

# below this acceptance probability rejection sampling is abandoned for inverse-CDF
_MIN_REJECTION_MASS = 0.01

# elevation spread that spreads a ring roughly evenly over the whole sphere
SPHERE_PHI_SIGMA = math.pi / 3

AXES = ("X", "Y", "Z")


@dataclass(frozen=True)
class TruncatedNormalSpec:
    """Normal(mu, sigma) conditioned on the closed interval [a, b]."""

    mu: float
    sigma: float
    a: float = -math.inf
    b: float = math.inf

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"truncated normal needs sigma > 0, got {self.sigma}")
        if not self.a < self.b:
            raise ValueError(f"truncated normal needs a < b, got [{self.a}, {self.b}]")

    @property
    def alpha(self) -> float:
        return (self.a - self.mu) / self.sigma

    @property
    def beta(self) -> float:
        return (self.b - self.mu) / self.sigma

    def mass(self) -> float:
        """Probability of the untruncated normal landing inside [a, b]."""
        alpha, beta = self.alpha, self.beta
        if alpha > 0:
            return float(special.ndtr(-alpha) - special.ndtr(-beta))
        return float(special.ndtr(beta) - special.ndtr(alpha))

    def cdf(self, x):
        """Closed-form CDF of the truncated distribution."""
        z = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        lo, hi = special.ndtr(self.alpha), special.ndtr(self.beta)
        return np.clip((special.ndtr(z) - lo) / (hi - lo), 0.0, 1.0)


@dataclass(frozen=True)
class RingSpec:
    radius_dist: TruncatedNormalSpec
    phi_sigma: float
    normal_axis: str = "Z"

    def __post_init__(self):
        if not self.phi_sigma > 0:
            raise ValueError(f"ring width phi_sigma must be > 0, got {self.phi_sigma}")
        if self.radius_dist.a < 0:
            raise ValueError("ring radius distribution must not allow negative distances")
        if self.normal_axis not in AXES:
            raise ValueError(f"normal_axis must be one of {AXES}, got {self.normal_axis!r}")


@dataclass(frozen=True)
class LampSpec:
    count_min: int
    count_max: int
    energy_dist: TruncatedNormalSpec
    radius_dist: TruncatedNormalSpec
    # exact uniform-on-sphere positions instead of the wide-ring heuristic
    uniform_sphere: bool = False

    def __post_init__(self):
        if self.count_min < 0 or self.count_min > self.count_max:
            raise ValueError(
                f"lamp count range must satisfy 0 <= min <= max, got [{self.count_min}, {self.count_max}]"
            )
        if self.energy_dist.a != 0 or self.energy_dist.b != math.inf:
            raise ValueError("lamp energy must be truncated to [0, +inf)")
        if self.radius_dist.a < 0:
            raise ValueError("lamp radius distribution must not allow negative distances")


class Lamp(NamedTuple):
    position: tuple[float, float, float]
    energy: float


@dataclass(frozen=True)
class SceneSample:
    camera_position: tuple[float, float, float]
    camera_target: tuple[float, float, float]
    camera_up: tuple[float, float, float]
    lamps: tuple[Lamp, ...]
    background_id: int
    rng_seed: int

    def __post_init__(self):
        if self.camera_position == self.camera_target:
            raise ValueError("camera position coincides with its target")
        if any(lamp.energy < 0 for lamp in self.lamps):
            raise ValueError("lamp energies must be non-negative")

    def to_dict(self) -> dict:
        return {
            "camera_position": list(self.camera_position),
            "camera_target": list(self.camera_target),
            "camera_up": list(self.camera_up),
            "lamps": [{"position": list(l.position), "energy": l.energy} for l in self.lamps],
            "background_id": self.background_id,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSample":
        return cls(
            camera_position=_vec3(d["camera_position"]),
            camera_target=_vec3(d["camera_target"]),
            camera_up=_vec3(d["camera_up"]),
            lamps=tuple(Lamp(_vec3(l["position"]), float(l["energy"])) for l in d["lamps"]),
            background_id=int(d["background_id"]),
            rng_seed=int(d["rng_seed"]),
        )


def _vec3(v) -> tuple[float, float, float]:
    x, y, z = v
    return (float(x), float(y), float(z))


def _tail_inverse_cdf(alpha: float, beta: float, u: float) -> float:
    # log-space inverse CDF on [alpha, beta] with beta <= 0 side dominant; exact far into the tail
    la, lb = special.log_ndtr(alpha), special.log_ndtr(beta)
    lp = lb + math.log1p(-(1.0 - u) * -math.expm1(la - lb))
    return float(special.ndtri_exp(lp))


def _standard_inverse_cdf(alpha: float, beta: float, u: float) -> float:
    if alpha > 0:
        # right tail: reflect so the log-CDF works on the small side
        return -_tail_inverse_cdf(-beta, -alpha, 1.0 - u)
    return _tail_inverse_cdf(alpha, beta, u)


def truncnorm_sample(spec: TruncatedNormalSpec, rng: np.random.Generator) -> float:
    """One draw from ``spec``; always inside [a, b]."""
    alpha, beta = spec.alpha, spec.beta
    if spec.mass() >= _MIN_REJECTION_MASS:
        while True:
            z = rng.standard_normal()
            if alpha <= z <= beta:
                break
    else:
        z = _standard_inverse_cdf(alpha, beta, rng.random())
    return min(max(spec.mu + spec.sigma * z, spec.a), spec.b)


def truncnorm_samples(spec: TruncatedNormalSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """Vectorized counterpart of :func:`truncnorm_sample` for bulk draws."""
    alpha, beta = spec.alpha, spec.beta
    if spec.mass() >= _MIN_REJECTION_MASS:
        out = np.empty(0)
        while out.size < size:
            need = size - out.size
            z = rng.standard_normal(int(need / spec.mass() * 1.1) + 16)
            out = np.concatenate([out, z[(z >= alpha) & (z <= beta)][:need]])
    else:
        u = rng.random(size)
        out = np.array([_standard_inverse_cdf(alpha, beta, ui) for ui in u])
    return np.clip(spec.mu + spec.sigma * out, spec.a, spec.b)


def spherical_to_cartesian(rho: float, theta: float, phi: float) -> np.ndarray:
    """Elevation convention: phi = 0 is the X-Y plane, phi = pi/2 the +Z pole."""
    c = math.cos(phi)
    return np.array([rho * c * math.cos(theta), rho * c * math.sin(theta), rho * math.sin(phi)])


def rotation_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotate_about_y(p, angle: float) -> np.ndarray:
    return rotation_y(angle) @ np.asarray(p, dtype=float)


# a ring is drawn around Z and then turned so its normal lands on the requested axis
_RING_ROTATIONS = {
    "Z": np.eye(3),
    "X": rotation_y(math.pi / 2),
    "Y": rotation_x(math.pi / 2),
}


def sample_ring_location(spec: RingSpec, rng: np.random.Generator) -> np.ndarray:
    rho = truncnorm_sample(spec.radius_dist, rng)
    phi = truncnorm_sample(TruncatedNormalSpec(0.0, spec.phi_sigma, -math.pi / 2, math.pi / 2), rng)
    theta = rng.uniform(0.0, 2 * math.pi)
    return _RING_ROTATIONS[spec.normal_axis] @ spherical_to_cartesian(rho, theta, phi)


def sample_sphere_location(radius_dist: TruncatedNormalSpec, rng: np.random.Generator) -> np.ndarray:
    """Exactly uniform direction (Archimedes: z ~ U(-1, 1)) at a truncated-normal radius."""
    rho = truncnorm_sample(radius_dist, rng)
    z = rng.uniform(-1.0, 1.0)
    theta = rng.uniform(0.0, 2 * math.pi)
    r = math.sqrt(max(0.0, 1.0 - z * z))
    return rho * np.array([r * math.cos(theta), r * math.sin(theta), z])


def sample_lamps(spec: LampSpec, rng: np.random.Generator) -> list[Lamp]:
    n = int(rng.integers(spec.count_min, spec.count_max, endpoint=True))
    ring = RingSpec(spec.radius_dist, SPHERE_PHI_SIGMA, "Z")
    lamps = []
    for _ in range(n):
        if spec.uniform_sphere:
            pos = sample_sphere_location(spec.radius_dist, rng)
        else:
            pos = sample_ring_location(ring, rng)
        energy = truncnorm_sample(spec.energy_dist, rng)
        lamps.append(Lamp(_vec3(pos), float(energy)))
    return lamps


def camera_up_for(position, target) -> tuple[float, float, float]:
    """World +Z, unless the view direction is (anti)parallel to it; then world +X."""
    d = np.asarray(target, dtype=float) - np.asarray(position, dtype=float)
    d /= np.linalg.norm(d)
    if math.hypot(d[0], d[1]) < 1e-6:
        return (1.0, 0.0, 0.0)
    return (0.0, 0.0, 1.0)


def sample_scene(
    camera_rings: Sequence[RingSpec],
    lamp_spec: LampSpec,
    corpus_size: int,
    seed: int,
) -> SceneSample:
    if not camera_rings:
        raise ValueError("at least one camera ring is required")
    if corpus_size < 1:
        raise ValueError("background corpus is empty")
    rng = np.random.default_rng(seed)
    ring = camera_rings[int(rng.integers(len(camera_rings)))]
    position = _vec3(sample_ring_location(ring, rng))
    target = (0.0, 0.0, 0.0)
    if position == target:
        # radius truncated at exactly zero; nudge off the target
        position = (0.0, 0.0, 1e-9)
    lamps = sample_lamps(lamp_spec, rng)
    background_id = int(rng.integers(corpus_size))
    return SceneSample(
        camera_position=position,
        camera_target=target,
        camera_up=camera_up_for(position, target),
        lamps=tuple(lamps),
        background_id=background_id,
        rng_seed=int(seed),
    )
