"""Dice, Hausdorff distance and their kernels.

The Hausdorff distance is taken between the centre points of *surface voxels*
(foreground voxels with at least one 6-connected background neighbour) in
world millimetres. Distances come from an exact separable Euclidean distance
transform, so they agree with brute force whenever the spacing products are
exactly representable.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import EmptyMask, GeometryMismatch

_INF = np.inf


class Degenerate(str, enum.Enum):
    NONE = "None"
    EMPTY_PREDICTION = "EmptyPrediction"
    EMPTY_REFERENCE = "EmptyReference"


@dataclass(frozen=True)
class MetricResult:
    dsc: float
    hd_mm: float
    volume_ml_pred: float
    volume_ml_gt: float
    degenerate_flag: Degenerate = Degenerate.NONE

    def as_dict(self):
        return {
            "dsc": self.dsc,
            "hd_mm": self.hd_mm,
            "volume_ml_pred": self.volume_ml_pred,
            "volume_ml_gt": self.volume_ml_gt,
            "degenerate_flag": self.degenerate_flag.value,
        }


def _check_pair(pred, gt):
    if not pred.same_geometry(gt):
        raise GeometryMismatch(
            f"prediction geometry {pred.dims}/{pred.spacing} does not match "
            f"reference {gt.dims}/{gt.spacing}"
        )


def dice(pred, gt):
    """Dice similarity coefficient 2|P∩G| / (|P|+|G|); 1.0 when both are empty."""
    _check_pair(pred, gt)
    p = pred.values
    g = gt.values
    total = int(np.count_nonzero(p)) + int(np.count_nonzero(g))
    if total == 0:
        return 1.0
    inter = int(np.count_nonzero(p & g))
    return 2.0 * inter / total


def surface_mask(mask):
    """Boolean array marking foreground voxels with a background 6-neighbour.

    Voxels outside the array count as background.
    """
    fg = np.asarray(mask.values, dtype=bool)
    padded = np.pad(fg, 1, constant_values=False)
    interior = padded[1:-1, 1:-1, 1:-1].copy()
    for axis in range(3):
        for shift in (-1, 1):
            sl = [slice(1, -1)] * 3
            sl[axis] = slice(1 + shift, padded.shape[axis] - 1 + shift)
            interior &= padded[tuple(sl)]
    return fg & ~interior


def surface_voxels(mask):
    """Indices (n, 3) of surface voxels, in C order."""
    return np.argwhere(surface_mask(mask))


@njit(cache=True, nogil=True)
def _envelope_lines(lines, w, v, z):
    # In-place lower envelope of parabolas w*(q-p)^2 + f[p] along each row.
    n_lines, n = lines.shape
    f = np.empty(n)
    for li in range(n_lines):
        for q in range(n):
            f[q] = lines[li, q]
        k = -1
        for q in range(n):
            if f[q] == _INF:
                continue
            s = -_INF
            while k >= 0:
                p = v[k]
                s = ((f[q] + w * q * q) - (f[p] + w * p * p)) / (2.0 * w * (q - p))
                if s <= z[k]:
                    k -= 1
                else:
                    break
            if k < 0:
                k = 0
                v[0] = q
                z[0] = -_INF
                z[1] = _INF
            else:
                k += 1
                v[k] = q
                z[k] = s
                z[k + 1] = _INF
        if k < 0:
            for q in range(n):
                lines[li, q] = _INF
            continue
        j = 0
        for q in range(n):
            while z[j + 1] < q:
                j += 1
            dq = q - v[j]
            lines[li, q] = w * dq * dq + f[v[j]]


def squared_distance_transform(mask):
    """Squared Euclidean distance (mm²) from each voxel centre to the nearest
    foreground voxel centre, honouring anisotropic spacing.

    Raises
    ------
    EmptyMask
        If the mask has no foreground voxels.
    """
    fg = np.asarray(mask.values, dtype=bool)
    if not fg.any():
        raise EmptyMask("distance transform of an empty mask")
    dist = np.where(fg, 0.0, _INF)
    for axis in range(3):
        w = float(mask.spacing[axis]) ** 2
        moved = np.moveaxis(dist, axis, -1)
        shape = moved.shape
        lines = np.ascontiguousarray(moved).reshape(-1, shape[-1])
        n = shape[-1]
        _envelope_lines(lines, w, np.empty(n, dtype=np.int64), np.empty(n + 1))
        dist = np.moveaxis(lines.reshape(shape), -1, axis)
    return np.ascontiguousarray(dist)


def distance_transform(mask):
    """Euclidean distance (mm) to the nearest foreground voxel centre."""
    return np.sqrt(squared_distance_transform(mask))


def _penalty_hd(grid):
    # largest possible distance between two voxel centres of the grid
    extent = (np.asarray(grid.dims) - 1) * np.asarray(grid.spacing)
    return float(np.linalg.norm(extent))


def directed_hausdorff_sq(src, dst):
    """Largest squared distance from a surface voxel of ``src`` to the
    surface of ``dst`` (both assumed non-empty)."""
    dst_surface = dst.with_values(surface_mask(dst))
    d2 = squared_distance_transform(dst_surface)
    return float(d2[surface_mask(src)].max())


def hausdorff(pred, gt):
    """Symmetric Hausdorff distance (mm) between the surface-voxel sets.

    If exactly one mask is empty the grid's diagonal extent is returned as a
    finite worst-case penalty; if both are empty the distance is 0.
    """
    _check_pair(pred, gt)
    p_any = bool(np.any(pred.values))
    g_any = bool(np.any(gt.values))
    if not p_any and not g_any:
        return 0.0
    if not p_any or not g_any:
        return _penalty_hd(gt)
    d2 = max(directed_hausdorff_sq(pred, gt), directed_hausdorff_sq(gt, pred))
    return float(np.sqrt(d2))


def mask_volume_ml(mask):
    """Foreground volume in millilitres."""
    voxel_mm3 = float(np.prod(mask.spacing))
    return int(np.count_nonzero(mask.values)) * voxel_mm3 / 1000.0


def evaluate_pair(pred, gt):
    """All per-case quantities for one prediction/reference pair."""
    _check_pair(pred, gt)
    p_any = bool(np.any(pred.values))
    g_any = bool(np.any(gt.values))
    flag = Degenerate.NONE
    if g_any and not p_any:
        flag = Degenerate.EMPTY_PREDICTION
    elif p_any and not g_any:
        flag = Degenerate.EMPTY_REFERENCE
    return MetricResult(
        dsc=dice(pred, gt),
        hd_mm=hausdorff(pred, gt),
        volume_ml_pred=mask_volume_ml(pred),
        volume_ml_gt=mask_volume_ml(gt),
        degenerate_flag=flag,
    )
