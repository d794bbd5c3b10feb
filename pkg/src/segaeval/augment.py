"""Four-factor test-time augmentation: z-rotation, translation, gamma, noise.

Each factor is driven by one coordinate of a point in the unit hypercube so the
augmentation can be plugged straight into a Saltelli design:

======  =======================  ==============================
factor  parameter                distribution
======  =======================  ==============================
u1      rotation ``alpha_deg``   N(0, 5) degrees, about world z
u2      translation ``d_mm``     U(0, 2) mm, along world +x
u3      log-gamma ``beta``       N(0, 0.05); gamma = exp(beta)
u4      noise std ``sigma``      U(0, 0.03), normalized units
======  =======================  ==============================
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.special import ndtri

from .errors import DomainError, GeometryMismatch
from .volume import LabelMask, VoxelGrid, index_to_world

FACTORS = ("alpha", "d", "beta", "sigma")
N_FACTORS = len(FACTORS)

ALPHA_STD_DEG = 5.0
D_MAX_MM = 2.0
BETA_STD = 0.05
SIGMA_MAX = 0.03

HU_WINDOW = (-1024.0, 3071.0)
_CLAMP_EPS = 1e-9
_RANGE_TOL = 1e-6


@dataclass(frozen=True)
class AugmentationParams:
    alpha_deg: float
    d_mm: float
    beta: float
    sigma: float
    unit_point: tuple = (0.5, 0.0, 0.5, 0.0)
    noise_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.d_mm <= D_MAX_MM:
            raise DomainError(f"d_mm={self.d_mm} outside [0, {D_MAX_MM}]")
        if not 0.0 <= self.sigma <= SIGMA_MAX:
            raise DomainError(f"sigma={self.sigma} outside [0, {SIGMA_MAX}]")

    @property
    def gamma(self):
        return math.exp(self.beta)

    @classmethod
    def identity(cls, noise_seed=0):
        return cls(0.0, 0.0, 0.0, 0.0, (0.5, 0.0, 0.5, 0.0), noise_seed)


@dataclass(frozen=True)
class AugmentedCase:
    image: VoxelGrid
    mask: LabelMask
    params: AugmentationParams
    provenance: dict = field(default_factory=dict)


def _inv_normal(u):
    return float(ndtri(min(max(u, _CLAMP_EPS), 1.0 - _CLAMP_EPS)))


def sample_params(unit_point, noise_seed=0):
    """Map a point of [0, 1]^4 to augmentation parameters (inverse-CDF)."""
    u = [float(x) for x in unit_point]
    if len(u) != N_FACTORS:
        raise DomainError(f"expected {N_FACTORS} coordinates, got {len(u)}")
    if any(not (0.0 <= x <= 1.0) for x in u):
        raise DomainError(f"unit point {u} outside [0, 1]^4")
    return AugmentationParams(
        alpha_deg=ALPHA_STD_DEG * _inv_normal(u[0]),
        d_mm=D_MAX_MM * u[1],
        beta=BETA_STD * _inv_normal(u[2]),
        sigma=SIGMA_MAX * u[3],
        unit_point=tuple(u),
        noise_seed=int(noise_seed),
    )


def normalize_intensity(image, window=HU_WINDOW):
    """Linearly map a CT window in HU onto [0, 1] (clipped), as float32."""
    lo, hi = window
    v = (np.asarray(image.values, dtype=np.float64) - lo) / (hi - lo)
    return image.with_values(np.clip(v, 0.0, 1.0).astype(np.float32))


def _resample_affine(grid, alpha_deg, d_mm):
    # Returns (matrix, offset) mapping output indices to source indices.
    a = grid.direction * np.asarray(grid.spacing)
    a_inv = np.linalg.inv(a)
    origin = np.asarray(grid.origin)
    centre = index_to_world(grid, (np.asarray(grid.dims) - 1) / 2.0)
    t = np.array([d_mm, 0.0, 0.0])
    th = math.radians(alpha_deg)
    c, s = math.cos(th), math.sin(th)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    matrix = a_inv @ rot.T @ a
    offset = a_inv @ (rot.T @ (origin - t - centre) + centre - origin)
    return matrix, offset


def apply_geometric(image, mask, params):
    """Rotate about the world z-axis through the volume centre, then translate
    along world +x. Image: trilinear, background 0; mask: nearest, background 0.
    """
    if not image.same_geometry(mask):
        raise GeometryMismatch("image and mask geometry differ")
    if params.alpha_deg == 0.0 and params.d_mm == 0.0:
        return image.with_values(image.values.copy()), mask.with_values(mask.values.copy())
    matrix, offset = _resample_affine(image, params.alpha_deg, params.d_mm)
    img = ndimage.affine_transform(
        np.asarray(image.values, dtype=np.float64), matrix, offset,
        order=1, mode="constant", cval=0.0,
    ).astype(image.values.dtype)
    msk = ndimage.affine_transform(
        mask.values.astype(np.uint8), matrix, offset,
        order=0, mode="constant", cval=0,
    )
    return image.with_values(img), mask.with_values(msk > 0)


def _splitmix64(x):
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def counter_normals(noise_seed, count, start=0):
    """Standard normal deviates keyed by (noise_seed, voxel index).

    Value ``k`` depends only on the seed and ``start + k``, so any slice of a
    volume can be generated independently and in any order.
    """
    with np.errstate(over="ignore"):
        key = _splitmix64(np.array([noise_seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))[0]
        idx = np.arange(start, start + count, dtype=np.uint64)
        h1 = _splitmix64(key ^ (np.uint64(2) * idx))
        h2 = _splitmix64(key ^ (np.uint64(2) * idx + np.uint64(1)))
    scale = 1.0 / 9007199254740992.0  # 2**-53
    u1 = 1.0 - (h1 >> np.uint64(11)).astype(np.float64) * scale  # (0, 1]
    u2 = (h2 >> np.uint64(11)).astype(np.float64) * scale
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def apply_intensity(image, params):
    """Gamma correction then additive Gaussian noise, clipped to [0, 1]."""
    v = np.asarray(image.values, dtype=np.float64)
    if v.size and (v.min() < -_RANGE_TOL or v.max() > 1.0 + _RANGE_TOL):
        raise DomainError("image intensities must be normalized to [0, 1]")
    v = np.clip(v, 0.0, 1.0) ** params.gamma
    if params.sigma > 0.0:
        noise = counter_normals(params.noise_seed, v.size).reshape(v.shape)
        v = v + params.sigma * noise
    out_dtype = image.values.dtype if image.values.dtype.kind == "f" else np.float32
    return image.with_values(np.clip(v, 0.0, 1.0).astype(out_dtype))


def augment_case(image, mask, params, provenance=None):
    """Normalize, then geometric, then intensity augmentation."""
    normalized = normalize_intensity(image)
    img, msk = apply_geometric(normalized, mask, params)
    img = apply_intensity(img, params)
    return AugmentedCase(img, msk, params, dict(provenance or {}))
